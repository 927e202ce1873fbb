#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mia/denoiser.hpp"
#include "mia/record.hpp"
#include "mia/schedule.hpp"
#include "mia/training.hpp"

namespace mia {

struct ScheduleConfig {
  std::size_t steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
  bool operator==(const ScheduleConfig&) const = default;
};

/// Effective configuration of every command.
struct Config {
  ModelConfig model;
  ScheduleConfig schedule;
  TrainConfig train;

  /// Throws std::invalid_argument on the first inconsistency.
  void validate() const;
  bool operator==(const Config&) const = default;
};

/// Keys missing from the JSON keep their defaults; unknown keys are rejected.
Config config_from_json(const std::string& text);
std::string config_to_json(const Config& config);
Config load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const Config& config);

/// Text checkpoint: a header with the step and the configuration, then one
/// named tensor dump per parameter and per optimizer moment.
void save_checkpoint(const std::filesystem::path& path, const Config& config,
                     const TrainerState& state);

struct Checkpoint {
  Config config;
  TrainerState state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Annotation file: {"records": [{"caption", "height", "width", "image"?,
/// "faces": [{"box": [x0,y0,x1,y1], "keypoints": [[x,y,c],...], "identity",
/// "feature"?}]}]}. Paths are relative to the file.
std::vector<AnnotatedRecord> read_annotations(const std::filesystem::path& path);

/// Writes `records` as a dataset directory: annotations.json plus one
/// subdirectory per record holding the image and face feature dumps.
void write_dataset(const std::filesystem::path& dir, std::span<const AnnotatedRecord> records);

/// Reads a dataset directory or an annotation file.
std::vector<AnnotatedRecord> read_dataset(const std::filesystem::path& path);

/// `step,loss` rows; appends when `append` is set, writing the header only to
/// a new file.
void write_loss_csv(const std::filesystem::path& path, std::size_t first_step,
                    std::span<const double> losses, bool append = false);

}  // namespace mia
