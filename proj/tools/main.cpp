#include <iostream>

#include "mia/cli.hpp"

int main(int argc, char** argv) { return mia::run_cli(argc, argv, std::cout, std::cerr); }
