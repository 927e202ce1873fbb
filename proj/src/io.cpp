#include "mia/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mia/pose.hpp"
#include "mia/tensor_io.hpp"

namespace mia {

using nlohmann::json;

namespace {

/// Reads fields out of a JSON object, remembering which keys were consumed
/// so leftovers can be reported.
class FieldReader {
 public:
  FieldReader(const json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw std::invalid_argument(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    if (!object_.contains(key)) return;
    try {
      target = object_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    return object_.contains(key) ? &object_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items())
      if (!seen_.count(key)) throw std::invalid_argument(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json& object_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string optimizer_name(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw std::invalid_argument("config: unknown optimizer '" + name + "' (expected sgd or adam)");
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(where + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

template <typename T>
T required(const json& object, const std::string& key, const std::string& where) {
  if (!object.is_object() || !object.contains(key))
    throw std::invalid_argument(where + ": missing '" + key + "'");
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

AnnotatedFace parse_face(const json& j, std::size_t height, std::size_t width,
                         const std::filesystem::path& base, const std::string& where) {
  AnnotatedFace face;
  const auto box = required<std::vector<double>>(j, "box", where);
  if (box.size() != 4) throw std::invalid_argument(where + ".box: expected [x0, y0, x1, y1]");
  face.box = {box[0], box[1], box[2], box[3]};
  for (double v : box)
    if (!std::isfinite(v)) throw std::invalid_argument(where + ".box: non-finite coordinate");
  if (!(face.box.x0 >= 0 && face.box.y0 >= 0 && face.box.x0 < face.box.x1 &&
        face.box.y0 < face.box.y1 && face.box.x1 <= static_cast<double>(width) &&
        face.box.y1 <= static_cast<double>(height)))
    throw std::invalid_argument(where + ".box: outside the " + std::to_string(height) + "x" +
                                std::to_string(width) + " image or degenerate");

  const auto points = required<std::vector<std::vector<double>>>(j, "keypoints", where);
  if (points.empty()) throw std::invalid_argument(where + ".keypoints: the face center is required");
  for (const auto& p : points) {
    if (p.size() != 3) throw std::invalid_argument(where + ".keypoints: expected [x, y, confidence]");
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw std::invalid_argument(where + ".keypoints: non-finite coordinate");
    if (!(p[2] >= 0.0 && p[2] <= 1.0))
      throw std::invalid_argument(where + ".keypoints: confidence outside [0, 1]");
    face.keypoints.push_back({p[0], p[1], p[2]});
  }
  face.identity = required<std::string>(j, "identity", where);
  if (j.contains("feature")) {
    face.feature = load_face_feature(base / j.at("feature").get<std::string>());
    if (face.feature.identity.empty()) face.feature.identity = face.identity;
  }
  return face;
}

}  // namespace

void Config::validate() const {
  model.validate();
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  for (auto r : model.stages)
    if (r == 0 || model.image_size % r) fail("stage resolutions must divide the image size");
  if (schedule.steps < 1) fail("schedule.steps must be at least 1");
  if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end &&
        schedule.beta_end < 1.0))
    fail("betas must satisfy 0 < beta_start <= beta_end < 1");
  if (train.batch < 1) fail("train.batch must be at least 1");
  if (train.capacity < 1) fail("train.capacity (N) must be at least 1");
  if (train.capacity > kPaletteSize)
    fail("train.capacity (N) must not exceed " + std::to_string(kPaletteSize));
  if (!(train.margin >= 0.0) || !std::isfinite(train.margin)) fail("train.margin must be >= 0");
  if (!(train.learning_rate > 0.0) || !std::isfinite(train.learning_rate))
    fail("train.learning_rate must be positive");
}

Config config_from_json(const std::string& text) {
  const json root = parse_json(text, "config");
  Config c;
  FieldReader top(root, "config");
  if (const json* m = top.sub("model")) {
    FieldReader r(*m, "config.model");
    auto& mc = c.model;
    r.read("image_size", mc.image_size);
    r.read("channels", mc.channels);
    r.read("width", mc.width);
    r.read("time_dim", mc.time_dim);
    r.read("key_dim", mc.key_dim);
    r.read("global_dim", mc.global_dim);
    r.read("local_dim", mc.local_dim);
    r.read("grid_side", mc.grid_side);
    r.read("heads", mc.heads);
    r.read("head_dim", mc.head_dim);
    r.read("text_len", mc.text_len);
    r.read("stages", mc.stages);
    r.finish();
  }
  if (const json* s = top.sub("schedule")) {
    FieldReader r(*s, "config.schedule");
    r.read("steps", c.schedule.steps);
    r.read("beta_start", c.schedule.beta_start);
    r.read("beta_end", c.schedule.beta_end);
    r.finish();
  }
  if (const json* t = top.sub("train")) {
    FieldReader r(*t, "config.train");
    auto& tc = c.train;
    std::string optimizer = optimizer_name(tc.optimizer);
    r.read("steps", tc.steps);
    r.read("batch", tc.batch);
    r.read("learning_rate", tc.learning_rate);
    r.read("optimizer", optimizer);
    r.read("seed", tc.seed);
    r.read("capacity", tc.capacity);
    r.read("margin", tc.margin);
    r.read("ablate_mask", tc.ablate_mask);
    r.finish();
    tc.optimizer = parse_optimizer(optimizer);
  }
  top.finish();
  c.validate();
  return c;
}

std::string config_to_json(const Config& c) {
  const auto& mc = c.model;
  const auto& tc = c.train;
  json j;
  j["model"] = {{"image_size", mc.image_size}, {"channels", mc.channels},
                {"width", mc.width},           {"time_dim", mc.time_dim},
                {"key_dim", mc.key_dim},       {"global_dim", mc.global_dim},
                {"local_dim", mc.local_dim},   {"grid_side", mc.grid_side},
                {"heads", mc.heads},           {"head_dim", mc.head_dim},
                {"text_len", mc.text_len},     {"stages", mc.stages}};
  j["schedule"] = {{"steps", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end}};
  j["train"] = {{"steps", tc.steps},         {"batch", tc.batch},
                {"learning_rate", tc.learning_rate},
                {"optimizer", optimizer_name(tc.optimizer)},
                {"seed", tc.seed},           {"capacity", tc.capacity},
                {"margin", tc.margin},       {"ablate_mask", tc.ablate_mask}};
  return j.dump(2);
}

Config load_config(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

void save_config(const std::filesystem::path& path, const Config& config) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << config_to_json(config) << '\n';
}

void save_checkpoint(const std::filesystem::path& path, const Config& config,
                     const TrainerState& state) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const auto& params = state.model.parameters();
  out << "mia-checkpoint 1\n";
  out << "step " << state.step << '\n';
  out << "config " << json::parse(config_to_json(config)).dump() << '\n';
  out << "tensors "
      << params.size() + state.first_moment.size() + state.second_moment.size() << '\n';
  auto dump = [&](const char* kind, const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, t] : tensors) {
      out << kind << ' ' << name << '\n';
      write_tensor(out, t);
    }
  };
  dump("param", params);
  dump("first_moment", state.first_moment);
  dump("second_moment", state.second_moment);
  if (!out) throw FormatError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  const std::string where = path.string();
  std::string line;
  auto next = [&](const std::string& tag) {
    if (!std::getline(in, line) || line.rfind(tag + " ", 0) != 0)
      throw FormatError(where + ": expected '" + tag + "' line");
    return line.substr(tag.size() + 1);
  };
  if (!std::getline(in, line) || line != "mia-checkpoint 1")
    throw FormatError(where + ": not a checkpoint (bad header)");
  Checkpoint ck;
  std::size_t count = 0;
  try {
    ck.state.step = std::stoull(next("step"));
    ck.config = config_from_json(next("config"));
    count = std::stoull(next("tensors"));
  } catch (const std::logic_error& e) {
    throw FormatError(where + ": " + e.what());
  }

  ToyDenoiser model = ToyDenoiser::initialize(ck.config.model, 0);
  auto& params = model.parameters();
  std::set<std::string> loaded;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw FormatError(where + ": truncated tensor list");
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind >> name;
    Tensor t = read_tensor(in);
    if (kind == "param") {
      auto it = params.find(name);
      if (it == params.end()) throw FormatError(where + ": unknown parameter '" + name + "'");
      if (it->second.shape() != t.shape())
        throw FormatError(where + ": parameter '" + name + "' has shape " +
                          shape_string(t.shape()) + ", expected " +
                          shape_string(it->second.shape()));
      it->second = std::move(t);
      loaded.insert(name);
    } else if (kind == "first_moment") {
      ck.state.first_moment[name] = std::move(t);
    } else if (kind == "second_moment") {
      ck.state.second_moment[name] = std::move(t);
    } else {
      throw FormatError(where + ": unknown tensor kind '" + kind + "'");
    }
  }
  if (loaded.size() != params.size())
    throw FormatError(where + ": checkpoint holds " + std::to_string(loaded.size()) + " of " +
                      std::to_string(params.size()) + " parameters");
  ck.state.model = std::move(model);
  return ck;
}

std::vector<AnnotatedRecord> read_annotations(const std::filesystem::path& path) {
  const json root = parse_json(read_file(path), path.string());
  const auto base = path.parent_path();
  if (!root.is_object() || !root.contains("records") || !root.at("records").is_array())
    throw std::invalid_argument(path.string() + ": expected {\"records\": [...]}");
  std::vector<AnnotatedRecord> records;
  std::size_t index = 0;
  for (const auto& r : root.at("records")) {
    const std::string where = path.string() + ": records[" + std::to_string(index++) + "]";
    AnnotatedRecord rec;
    rec.caption = required<std::string>(r, "caption", where);
    const auto height = required<std::size_t>(r, "height", where);
    const auto width = required<std::size_t>(r, "width", where);
    if (height == 0 || width == 0) throw std::invalid_argument(where + ": empty image size");
    if (r.contains("image")) {
      rec.image = load_tensor(base / r.at("image").get<std::string>());
      if (rec.image.rank() != 3 || rec.image.dim(0) != height || rec.image.dim(1) != width)
        throw std::invalid_argument(where + ": image has shape " + shape_string(rec.image.shape()) +
                                    ", expected [" + std::to_string(height) + " x " +
                                    std::to_string(width) + " x C]");
    }
    if (r.contains("faces")) {
      std::size_t f = 0;
      for (const auto& face : r.at("faces"))
        rec.faces.push_back(
            parse_face(face, height, width, base, where + ".faces[" + std::to_string(f++) + "]"));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_dataset(const std::filesystem::path& dir, std::span<const AnnotatedRecord> records) {
  std::filesystem::create_directories(dir);
  json list = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    char name[32];
    std::snprintf(name, sizeof name, "rec%04zu", i);
    std::filesystem::create_directories(dir / name);
    json r;
    r["caption"] = rec.caption;
    r["height"] = rec.image.dim(0);
    r["width"] = rec.image.dim(1);
    r["image"] = std::string(name) + "/image.tensor";
    save_tensor(dir / name / "image.tensor", rec.image);
    json faces = json::array();
    for (std::size_t f = 0; f < rec.faces.size(); ++f) {
      const auto& face = rec.faces[f];
      json points = json::array();
      for (const auto& k : face.keypoints) points.push_back({k.x, k.y, k.confidence});
      const std::string feature = std::string(name) + "/face" + std::to_string(f) + ".feature";
      save_face_feature(dir / feature, face.feature);
      faces.push_back({{"box", {face.box.x0, face.box.y0, face.box.x1, face.box.y1}},
                       {"keypoints", points},
                       {"identity", face.identity},
                       {"feature", feature}});
    }
    r["faces"] = faces;
    list.push_back(r);
  }
  std::ofstream out(dir / "annotations.json");
  if (!out) throw FormatError("cannot write " + (dir / "annotations.json").string());
  out << json{{"records", list}}.dump(1) << '\n';
}

std::vector<AnnotatedRecord> read_dataset(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return read_annotations(path / "annotations.json");
  return read_annotations(path);
}

void write_loss_csv(const std::filesystem::path& path, std::size_t first_step,
                    std::span<const double> losses, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  if (header) out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << first_step + i << ',' << losses[i] << '\n';
}

}  // namespace mia
