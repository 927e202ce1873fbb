#include "mia/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mia/grad_suite.hpp"
#include "mia/inference.hpp"
#include "mia/io.hpp"
#include "mia/metrics.hpp"
#include "mia/synthetic.hpp"
#include "mia/tensor_io.hpp"
#include "mia/training.hpp"

namespace mia {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Flags shared by the commands that build a configuration.
struct ConfigFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  bool ablate_mask = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* steps_opt = nullptr;

  void add(CLI::App* app, bool with_steps) {
    app->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
    seed_opt = app->add_option("--seed", seed, "Random seed (overrides train.seed)");
    if (with_steps) steps_opt = app->add_option("--steps", steps, "Training steps (overrides train.steps)");
  }

  Config apply(Config c) const {
    if (seed_opt && seed_opt->count()) c.train.seed = seed;
    if (steps_opt && steps_opt->count()) c.train.steps = steps;
    if (ablate_mask) c.train.ablate_mask = true;
    c.validate();
    return c;
  }

  Config load() const { return apply(config.empty() ? Config{} : load_config(config)); }
};

/// Where records come from: a generated synthetic set or a dataset on disk.
struct DataFlags {
  bool synthetic = false;
  std::string dataset;
  std::size_t records = 64;
  std::uint64_t data_seed = 0;

  void add(CLI::App* app) {
    auto* s = app->add_flag("--synthetic", synthetic, "Use the generated synthetic dataset");
    auto* d = app->add_option("--dataset", dataset, "Dataset directory or annotation file");
    s->excludes(d);
    app->add_option("--records", records, "Synthetic record count")->check(CLI::PositiveNumber);
    app->add_option("--data-seed", data_seed, "Synthetic dataset seed");
  }

  std::vector<AnnotatedRecord> load(const ModelConfig& mc) const {
    if (synthetic) return make_synthetic_dataset(synthetic_options(mc, records, data_seed));
    if (dataset.empty()) throw std::invalid_argument("either --synthetic or --dataset is required");
    return read_dataset(dataset);
  }

  static SyntheticOptions synthetic_options(const ModelConfig& mc, std::size_t records,
                                            std::uint64_t seed) {
    SyntheticOptions so;
    so.records = records;
    so.height = so.width = mc.image_size;
    so.channels = mc.channels;
    so.grid_side = mc.grid_side;
    so.global_dim = mc.global_dim;
    so.local_dim = mc.local_dim;
    so.seed = seed;
    return so;
  }
};

/// Model from a checkpoint, or freshly initialized from the configuration.
struct ModelFlags {
  std::string checkpoint;
  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint written by train")
        ->check(CLI::ExistingFile);
  }
  std::pair<Config, ToyDenoiser> load(const ConfigFlags& flags) const {
    if (checkpoint.empty()) {
      Config c = flags.load();
      return {c, ToyDenoiser::initialize(c.model, c.train.seed)};
    }
    Checkpoint ck = load_checkpoint(checkpoint);
    Config c = ck.config;
    if (!flags.config.empty()) {
      const Config file = load_config(flags.config);
      if (!(file.model == c.model))
        throw std::invalid_argument("--config model dimensions differ from the checkpoint");
      c = file;
    }
    return {flags.apply(c), std::move(ck.state.model)};
  }
};

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw std::invalid_argument(what + ": bad entry '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

std::vector<FaceBox> parse_boxes(const std::string& text, std::size_t size) {
  std::vector<FaceBox> boxes;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ';')) {
    if (item.empty()) continue;
    std::stringstream b(item);
    std::string c;
    std::vector<double> v;
    while (std::getline(b, c, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::logic_error&) {
        throw std::invalid_argument("--boxes: bad coordinate '" + c + "'");
      }
    }
    if (v.size() != 4) throw std::invalid_argument("--boxes: expected x0,y0,x1,y1 in '" + item + "'");
    const FaceBox box{v[0], v[1], v[2], v[3]};
    const double lim = static_cast<double>(size);
    if (!(box.x0 >= 0 && box.y0 >= 0 && box.x0 < box.x1 && box.y0 < box.y1 && box.x1 <= lim &&
          box.y1 <= lim))
      throw std::invalid_argument("--boxes: '" + item + "' is degenerate or outside the image");
    boxes.push_back(box);
  }
  return boxes;
}

/// Mean over channels of an [H x W x C] grid.
Tensor channel_mean(const Tensor& grid) {
  Tensor out({grid.dim(0), grid.dim(1)}, 0.0);
  for (std::size_t i = 0; i < grid.dim(0); ++i)
    for (std::size_t j = 0; j < grid.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < grid.dim(2); ++c) s += grid.at(i, j, c);
      out.at(i, j) = s / static_cast<double>(grid.dim(2));
    }
  return out;
}

void write_grid_pgm(const fs::path& path, const Tensor& grid) {
  const Tensor mean = channel_mean(grid);
  const auto [lo, hi] = std::minmax_element(mean.values().begin(), mean.values().end());
  write_pgm(path, mean, *lo, *hi);
}

void write_matrix_csv(const fs::path& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out << m.at(i, j) << (j + 1 == m.cols() ? '\n' : ',');
}

/// Per-head weight matrices as CSV, per-face block mass as PGM heatmaps and a
/// concentration table. Returns the summary over every site.
ConcentrationSummary dump_sites(const fs::path& dir, const std::vector<AttentionSite>& sites) {
  fs::create_directories(dir);
  std::ofstream table(dir / "concentration.csv");
  if (!table) throw FormatError("cannot write " + (dir / "concentration.csv").string());
  table << std::setprecision(17) << "site,face,matching,foreign,text,samples\n";
  ConcentrationSummary summary;
  for (const auto& site : sites) {
    for (std::size_t h = 0; h < site.maps.size(); ++h)
      write_matrix_csv(dir / (site.name + "_head" + std::to_string(h) + ".csv"), site.maps[h]);
    const StackLayout& l = site.reference.layout;
    const std::size_t r = site.resolution;
    for (std::size_t f = 0; f < l.faces; ++f) {
      Tensor heat({r, r}, 0.0);
      for (std::size_t q = 0; q < r * r; ++q) {
        double mass = 0.0;
        for (const auto& map : site.maps)
          for (std::size_t k = l.block_begin(f); k < l.block_end(f); ++k) mass += map.at(q, k);
        heat[q] = mass / static_cast<double>(site.maps.size());
      }
      write_pgm(dir / (site.name + "_face" + std::to_string(f) + ".pgm"), heat, 0.0, 1.0);
    }
    const auto stats = attention_concentration(site.maps, site.reference);
    for (std::size_t f = 0; f < stats.size(); ++f) {
      const auto& s = stats[f];
      table << site.name << ',' << f << ',' << s.matching << ',' << s.foreign << ',' << s.text << ','
            << s.samples << '\n';
      summary.merge(s);
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, bool inject_fault, std::ostream& out) {
  double worst = 0.0;
  bool ok = true;
  out << std::setprecision(3) << std::scientific;
  for (std::size_t k = 0; k < seeds; ++k) {
    GradSuiteOptions o;
    o.seed = seed + k;
    o.inject_fault = inject_fault;
    for (const auto& e : run_gradient_suite(o)) {
      out << "seed " << o.seed << "  " << std::left << std::setw(28) << e.name << " max rel err "
          << e.result.max_rel_error << "  (" << e.result.coords_checked << " coords)  "
          << (e.passed ? "PASS" : "FAIL") << '\n';
      worst = std::max(worst, e.result.max_rel_error);
      ok = ok && e.passed;
    }
  }
  out << "max relative error " << worst << " (tolerance 1.000e-05): " << (ok ? "PASS" : "FAIL")
      << '\n';
  return ok ? kExitOk : kExitNumeric;
}

int cmd_train(const ConfigFlags& flags, const DataFlags& data, const std::string& resume,
              const fs::path& dir, std::ostream& out) {
  Config cfg;
  TrainerState state;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    cfg = flags.apply(ck.config);
    state = std::move(ck.state);
    if (!flags.config.empty()) throw std::invalid_argument("--config cannot be combined with --resume");
  } else {
    cfg = flags.load();
    state.model = ToyDenoiser::initialize(cfg.model, cfg.train.seed);
  }
  const auto records = data.load(cfg.model);
  const auto schedule = cfg.schedule.build();
  fs::create_directories(dir);
  const std::size_t first = state.step;
  std::vector<double> trace;
  int status = kExitOk;
  try {
    trace = train(state, records, cfg.train, schedule);
  } catch (const TrainingDiverged& e) {
    write_loss_csv(dir / "loss.csv", first, e.trace, !resume.empty());
    throw;
  }
  write_loss_csv(dir / "loss.csv", first, trace, !resume.empty());
  save_checkpoint(dir / "checkpoint.txt", cfg, state);
  save_config(dir / "config.json", cfg);
  out << "trained steps " << first << ".." << state.step << (cfg.train.ablate_mask ? " (mask ablated)" : "")
      << '\n';
  if (!trace.empty())
    out << std::setprecision(6) << "loss first " << trace.front() << " last " << trace.back() << '\n';
  out << "wrote " << (dir / "checkpoint.txt").string() << '\n';
  return status;
}

struct InferFlags {
  std::string pose;
  std::size_t pose_record = 0;
  std::string identities;
  std::size_t identity_record = 0;
  std::vector<std::string> features;
  std::size_t count = 0;
  std::string caption;
  std::size_t sample_steps = 10;
};

int cmd_infer(const ConfigFlags& flags, const ModelFlags& model_flags, const InferFlags& f,
              const fs::path& dir, std::ostream& out) {
  auto [cfg, model] = model_flags.load(flags);
  const auto pose_records = read_dataset(f.pose);
  if (f.pose_record >= pose_records.size())
    throw std::invalid_argument("--pose-record " + std::to_string(f.pose_record) + " out of range");
  const AnnotatedRecord& pose = pose_records[f.pose_record];

  InferenceRequest request;
  for (const auto& path : f.features) request.identities.push_back(load_face_feature(path));
  if (!f.identities.empty()) {
    const auto id_records = read_dataset(f.identities);
    if (f.identity_record >= id_records.size())
      throw std::invalid_argument("--identity-record " + std::to_string(f.identity_record) +
                                  " out of range");
    for (const auto& face : id_records[f.identity_record].faces) {
      if (face.feature.global.size() == 0)
        throw std::invalid_argument("identity record face '" + face.identity + "' has no feature");
      request.identities.push_back(face.feature);
    }
  }
  if (f.count > 0) {
    if (f.count > request.identities.size())
      throw std::invalid_argument("--count exceeds the available identities");
    request.identities.resize(f.count);
  }
  request.pose_faces = pose.faces;
  request.caption = f.caption.empty() ? pose.caption : f.caption;
  request.margin = cfg.train.margin;
  request.sample_steps = f.sample_steps;
  request.seed = cfg.train.seed;
  request.ablate_mask = cfg.train.ablate_mask;

  const InferenceResult result = run_inference(model, cfg.schedule.build(), request);
  fs::create_directories(dir);
  save_tensor(dir / "sample.tensor", result.sample);
  write_grid_pgm(dir / "sample.pgm", result.sample);
  write_grid_pgm(dir / "control.pgm", result.conditioning.control);
  for (std::size_t s = 0; s < result.masks.size(); ++s)
    write_pgm(dir / ("mask_" + std::to_string(cfg.model.stages[s]) + ".pgm"), result.masks[s].values,
              0.0, 1.0);
  const json stack = {{"stack_rows", result.stack_rows},
                      {"text_len", result.layout.text_len},
                      {"block_len", result.layout.block_len},
                      {"faces", result.layout.faces}};
  std::ofstream(dir / "stack.json") << stack.dump(2) << '\n';
  dump_sites(dir / "attention", result.sites);
  out << "identities " << request.identities.size() << ", stack rows " << result.stack_rows << " = "
      << result.layout.text_len << " + " << result.layout.faces << " x " << result.layout.block_len
      << '\n';
  out << "wrote " << (dir / "sample.tensor").string() << '\n';
  return kExitOk;
}

int cmd_build_mask(std::size_t size, const std::string& boxes_text, const std::string& levels_text,
                   double margin, std::size_t text_len, std::size_t grid_side, const fs::path& dir,
                   std::ostream& out) {
  if (size == 0) throw std::invalid_argument("--image-size must be positive");
  const auto boxes = parse_boxes(boxes_text, size);
  const auto levels = parse_sizes(levels_text, "--levels");
  fs::create_directories(dir);
  std::vector<MaskPyramid> pyramids;
  for (std::size_t n = 0; n < boxes.size(); ++n) {
    const FaceBox box = expand_box(boxes[n], margin, size, size);
    pyramids.push_back(build_pyramid(rasterize_mask(box, size, size, n), levels));
    write_pyramid_pgm(dir, "face" + std::to_string(n), pyramids.back());
  }
  const std::size_t block = grid_side * grid_side + 1;
  for (auto r : levels) {
    std::vector<SpatialMask> level;
    for (const auto& p : pyramids) level.push_back(p.at(r));
    const AttentionMask m = assemble_attention_mask(text_len, block, r, level);
    write_pgm(dir / ("attention_mask_" + std::to_string(r) + ".pgm"), m.values, 0.0, 1.0);
    out << "level " << r << ": M " << m.values.rows() << " x " << m.values.cols() << '\n';
  }
  return kExitOk;
}

int cmd_dump_attention(const ConfigFlags& flags, const ModelFlags& model_flags, const DataFlags& data,
                       std::size_t record, std::size_t t, bool unmasked, const fs::path& dir,
                       std::ostream& out) {
  auto [cfg, model] = model_flags.load(flags);
  const auto records = data.load(cfg.model);
  if (record >= records.size())
    throw std::invalid_argument("--record " + std::to_string(record) + " out of range");
  const auto schedule = cfg.schedule.build();
  if (t < 1 || t > schedule.steps()) throw std::invalid_argument("--t outside the schedule");
  const AnnotatedRecord& rec = records[record];

  std::vector<std::size_t> order(std::min(rec.faces.size(), cfg.train.capacity));
  std::iota(order.begin(), order.end(), std::size_t{0});
  const ToyTextEncoder text(cfg.model.text_len, cfg.model.key_dim);
  const Conditioning cond = make_conditioning(cfg.model, text.encode(rec.caption), rec.faces, order,
                                              circles_for_order(order), cfg.train.margin);
  std::mt19937_64 rng(cfg.train.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor noise(rec.image.shape());
  for (auto& v : noise.data()) v = normal(rng);

  std::vector<AttentionSite> sites;
  PredictOptions options;
  options.ablate_mask = cfg.train.ablate_mask;
  options.apply_mask = !unmasked;
  options.sites = &sites;
  predict_noise(model, add_noise(rec.image, t, noise, schedule), t, cond, options);
  const ConcentrationSummary s = dump_sites(dir, sites);
  out << std::setprecision(6) << "faces " << order.size() << ", sites " << sites.size()
      << ", matching " << s.matching << ", foreign " << s.foreign << ", ratio " << s.ratio() << '\n';
  return kExitOk;
}

int cmd_eval_metrics(const fs::path& manifest_path, const fs::path& report_path, std::ostream& out) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot read " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  if (!m.contains("pairs") || !m.at("pairs").is_array())
    throw std::invalid_argument("manifest: expected a \"pairs\" array");

  std::vector<ReferencePair> refs, gens;
  std::vector<std::string> prompts;
  for (const auto& p : m.at("pairs")) {
    auto load = [&](const char* key) {
      if (!p.contains(key)) throw std::invalid_argument(std::string("manifest pair: missing '") + key + "'");
      return load_tensor(base / p.at(key).get<std::string>());
    };
    refs.push_back({load("a"), load("b")});
    gens.push_back({load("a_gen"), load("b_gen")});
    prompts.push_back(p.value("prompt", std::string{}));
  }
  if (refs.empty()) throw std::invalid_argument("manifest: no pairs to evaluate");

  const std::string kind = m.value("encoder", std::string("passthrough"));
  std::unique_ptr<ImageEncoder> face;
  if (kind == "passthrough") {
    face = std::make_unique<PassthroughEncoder>(refs.front().a.size());
  } else if (kind == "pattern") {
    const Tensor& a = refs.front().a;
    if (a.rank() != 3) throw std::invalid_argument("pattern encoder needs [h x w x C] crops");
    face = std::make_unique<PatternFaceEncoder>(a.dim(2), m.value("pattern_side", std::size_t{2}));
  } else {
    throw std::invalid_argument("manifest: unknown encoder '" + kind + "'");
  }
  std::unique_ptr<TextEncoder> text;
  std::unique_ptr<ImageEncoder> image;
  if (m.contains("text_encoder")) {
    if (m.at("text_encoder") != "hash")
      throw std::invalid_argument("manifest: unknown text encoder");
    image = std::make_unique<PassthroughEncoder>(gens.front().a.size(), EncoderKind::kImage);
    text = std::make_unique<HashTextEncoder>(image->dim());
  }

  const MetricReport report = evaluate_batch(refs, gens, prompts, *face, text.get(), image.get());
  std::ofstream csv(report_path);
  if (!csv) throw FormatError("cannot write " + report_path.string());
  write_report_csv(csv, report);
  out << report_summary(report);
  return kExitOk;
}

int cmd_make_synthetic(const ConfigFlags& flags, std::size_t records, const fs::path& dir,
                       std::ostream& out) {
  const Config cfg = flags.load();
  const auto data = make_synthetic_dataset(
      DataFlags::synthetic_options(cfg.model, records, cfg.train.seed));
  write_dataset(dir, data);
  out << "wrote " << data.size() << " records to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked identity-conditioned toy diffusion", "mia"};
  app.require_subcommand(1);
  fs::path out_dir;

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 1;
  bool inject_fault = false;
  std::string gc_config;
  gradcheck->add_option("--config", gc_config, "Accepted for symmetry; the suite uses its own tiny model")
      ->check(CLI::ExistingFile);
  gradcheck->add_option("--seed", gc_seed, "First seed");
  gradcheck->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  gradcheck->add_flag("--inject-fault", inject_fault)->group("");

  auto* train_cmd = app.add_subcommand("train", "Train the denoiser");
  ConfigFlags train_flags;
  DataFlags train_data;
  std::string resume;
  train_flags.add(train_cmd, true);
  train_data.add(train_cmd);
  train_cmd->add_flag("--ablate-mask", train_flags.ablate_mask, "Replace every M with all ones");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* infer = app.add_subcommand("infer", "Sample an image for a set of identities and a pose");
  ConfigFlags infer_flags;
  ModelFlags infer_model;
  InferFlags infer_opts;
  infer_flags.add(infer, false);
  infer_model.add(infer);
  infer->add_flag("--ablate-mask", infer_flags.ablate_mask, "Replace every M with all ones");
  infer->add_option("--pose", infer_opts.pose, "Pose annotation file or dataset")->required();
  infer->add_option("--pose-record", infer_opts.pose_record, "Record index in --pose");
  infer->add_option("--identities", infer_opts.identities, "Annotation file or dataset with identity features");
  infer->add_option("--identity-record", infer_opts.identity_record, "Record index in --identities");
  infer->add_option("--features", infer_opts.features, "Face feature dumps, in stacking order");
  infer->add_option("--count", infer_opts.count, "Use only the first N identities");
  infer->add_option("--caption", infer_opts.caption, "Prompt (defaults to the pose record caption)");
  infer->add_option("--sample-steps", infer_opts.sample_steps, "Sampler steps")->check(CLI::PositiveNumber);
  infer->add_option("--out", out_dir, "Output directory")->required();

  auto* build_mask = app.add_subcommand("build-mask", "Rasterize face masks into a pyramid");
  std::size_t bm_size = 0, bm_text = 4, bm_grid = 2;
  std::string bm_boxes, bm_levels;
  double bm_margin = 0.0;
  build_mask->add_option("--image-size", bm_size, "Square image side")->required();
  build_mask->add_option("--boxes", bm_boxes, "Boxes 'x0,y0,x1,y1;...'")->required();
  build_mask->add_option("--levels", bm_levels, "Resolutions, e.g. 64,32,16,8")->required();
  build_mask->add_option("--margin", bm_margin, "Total box growth as a fraction of its size");
  build_mask->add_option("--text-len", bm_text, "Text tokens in the assembled M");
  build_mask->add_option("--grid-side", bm_grid, "L; face blocks hold L*L+1 tokens");
  build_mask->add_option("--out", out_dir, "Output directory")->required();

  auto* dump = app.add_subcommand("dump-attention", "Write attention maps of one denoiser pass");
  ConfigFlags dump_flags;
  ModelFlags dump_model;
  DataFlags dump_data;
  std::size_t dump_record = 0, dump_t = 50;
  bool unmasked = false;
  dump_flags.add(dump, false);
  dump_model.add(dump);
  dump_data.add(dump);
  auto* ablate = dump->add_flag("--ablate-mask", dump_flags.ablate_mask, "Use all-ones masks");
  dump->add_flag("--unmasked", unmasked, "Run the unmasked reference kernel")->excludes(ablate);
  dump->add_option("--record", dump_record, "Record index");
  dump->add_option("--t", dump_t, "Timestep");
  dump->add_option("--out", out_dir, "Output directory")->required();

  auto* eval = app.add_subcommand("eval-metrics", "Identity metrics for a manifest of pairs");
  std::string pairs;
  fs::path report;
  eval->add_option("--pairs", pairs, "Manifest JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", report, "Report CSV")->required();

  auto* synth = app.add_subcommand("make-synthetic", "Write the synthetic dataset");
  ConfigFlags synth_flags;
  std::size_t synth_records = 64;
  synth_flags.add(synth, false);
  synth->add_option("--records", synth_records, "Record count")->check(CLI::PositiveNumber);
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_seeds, inject_fault, out);
    if (*train_cmd) return cmd_train(train_flags, train_data, resume, out_dir, out);
    if (*infer) return cmd_infer(infer_flags, infer_model, infer_opts, out_dir, out);
    if (*build_mask)
      return cmd_build_mask(bm_size, bm_boxes, bm_levels, bm_margin, bm_text, bm_grid, out_dir, out);
    if (*dump)
      return cmd_dump_attention(dump_flags, dump_model, dump_data, dump_record, dump_t, unmasked,
                                out_dir, out);
    if (*eval) return cmd_eval_metrics(pairs, report, out);
    if (*synth) return cmd_make_synthetic(synth_flags, synth_records, out_dir, out);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace mia
