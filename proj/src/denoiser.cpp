#include "mia/denoiser.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mia {

namespace {

const char* kAttnParts[] = {"q", "k", "v", "o"};

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::string down_name(const std::string& branch, std::size_t s) {
  return branch + ".down" + std::to_string(s);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (image_size == 0 || channels == 0 || width == 0 || key_dim == 0 || global_dim == 0 ||
      local_dim == 0 || grid_side == 0 || heads == 0 || head_dim == 0 || text_len == 0)
    fail("all dimensions must be positive");
  if (time_dim < 2 || time_dim % 2) fail("time_dim must be even and at least 2");
  if (stages.empty()) fail("at least one stage is required");
  if (stages.front() != image_size) fail("the first stage must run at the image size");
  for (std::size_t s = 1; s < stages.size(); ++s)
    if (stages[s] * 2 != stages[s - 1]) fail("each stage must halve the previous resolution");
}

ToyDenoiser ToyDenoiser::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ToyDenoiser m;
  m.config_ = config;
  auto& p = m.params_;
  std::mt19937_64 rng(seed);
  const std::size_t d = config.width;

  const ProjectionParams proj =
      ProjectionParams::random(config.global_dim, config.local_dim, config.key_dim, rng);
  p["proj.global.w"] = proj.global_weight;
  p["proj.global.b"] = proj.global_bias;
  p["proj.local.w"] = proj.local_weight;
  p["proj.local.b"] = proj.local_bias;

  p["main.in.w"] = gaussian({config.channels, d}, rng);
  p["main.in.b"] = Tensor({1, d}, 0.0);
  auto add_block = [&](const std::string& prefix) {
    p[prefix + ".mix.w"] = gaussian({d, d}, rng);
    p[prefix + ".mix.b"] = Tensor({1, d}, 0.0);
    p[prefix + ".time.w"] = gaussian({config.time_dim, d}, rng);
    const AttentionParams a =
        AttentionParams::random(d, config.key_dim, config.heads, config.head_dim, rng);
    p[prefix + ".attn.q"] = a.query;
    p[prefix + ".attn.k"] = a.key;
    p[prefix + ".attn.v"] = a.value;
    p[prefix + ".attn.o"] = a.output;
  };
  for (std::size_t s = 0; s < config.stages.size(); ++s) add_block(down_name("main", s));
  for (std::size_t s = 0; s + 1 < config.stages.size(); ++s)
    add_block("main.up" + std::to_string(s));
  p["main.out.w"] = gaussian({d, config.channels}, rng);
  p["main.out.b"] = Tensor({1, config.channels}, 0.0);

  // Control branch: the down path starts as an exact copy of the main one.
  p["ctrl.in.w"] = p["main.in.w"];
  p["ctrl.in.b"] = p["main.in.b"];
  p["ctrl.hint.w"] = gaussian({3, d}, rng);
  p["ctrl.hint.b"] = Tensor({1, d}, 0.0);
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const std::string src = down_name("main", s), dst = down_name("ctrl", s);
    for (const char* part : {".mix.w", ".mix.b", ".time.w"}) p[dst + part] = p[src + part];
    for (const char* part : kAttnParts) p[dst + ".attn." + part] = p[src + ".attn." + part];
    p["ctrl.fuse" + std::to_string(s) + ".w"] = Tensor({d, d}, 0.0);
    p["ctrl.fuse" + std::to_string(s) + ".b"] = Tensor({1, d}, 0.0);
  }
  return m;
}

const Tensor& ToyDenoiser::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
  return it->second;
}

ProjectionParams ToyDenoiser::projection() const {
  return {parameter("proj.global.w"), parameter("proj.global.b"), parameter("proj.local.w"),
          parameter("proj.local.b")};
}

BoundModel::BoundModel(const ToyDenoiser& model, Tape& tape, bool trainable)
    : config_(model.config()), tape_(&tape) {
  for (const auto& [name, value] : model.parameters())
    vars_.emplace(name, trainable ? tape.leaf(value) : tape.constant(value));
}

BoundModel::BoundModel(const ModelConfig& config, Tape& tape, std::map<std::string, Var> vars)
    : config_(config), tape_(&tape), vars_(std::move(vars)) {}

const Var& BoundModel::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
  return it->second;
}

Tensor timestep_embedding(std::size_t t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    e.at(0, i) = std::sin(static_cast<double>(t) * freq);
    e.at(0, half + i) = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Var embed_conditioning(const BoundModel& model, const Conditioning& cond, StackLayout& layout) {
  const ModelConfig& cfg = model.config();
  if (cond.text.tokens.rank() != 2 || cond.text.length() != cfg.text_len ||
      cond.text.width() != cfg.key_dim)
    throw ShapeError("conditioning text must be [" + std::to_string(cfg.text_len) + " x " +
                     std::to_string(cfg.key_dim) + "], got " +
                     shape_string(cond.text.tokens.shape()));
  const ProjectionVars proj{model["proj.global.w"], model["proj.global.b"], model["proj.local.w"],
                            model["proj.local.b"]};
  std::vector<Var> blocks;
  for (const auto& face : cond.faces) {
    if (face.grid_side() != cfg.grid_side)
      throw ShapeError("face local grid side " + std::to_string(face.grid_side()) +
                       " does not match model L = " + std::to_string(cfg.grid_side));
    blocks.push_back(project_face(face, proj));
  }
  return stack_embeddings(model.tape().constant(cond.text.tokens), blocks, layout);
}

namespace {

struct StageMasks {
  AttentionMask applied;
  AttentionMask reference;
};

std::vector<StageMasks> stage_masks(const ModelConfig& cfg, const Conditioning& cond,
                                    const StackLayout& layout, bool ablate) {
  if (cond.masks.size() != cond.faces.size())
    throw std::invalid_argument("conditioning has " + std::to_string(cond.faces.size()) +
                                " faces but " + std::to_string(cond.masks.size()) + " mask pyramids");
  std::vector<StageMasks> out;
  for (auto r : cfg.stages) {
    std::vector<SpatialMask> level;
    for (const auto& pyramid : cond.masks) level.push_back(pyramid.at(r));
    AttentionMask m = assemble_attention_mask(layout.text_len, layout.block_len, r, level);
    if (!(m.layout == layout)) throw ShapeError("mask layout does not match the embedding stack");
    AttentionMask applied = ablate ? all_ones_mask(r * r, layout) : m;
    out.push_back({std::move(applied), std::move(m)});
  }
  return out;
}

Var pool(const Var& h, std::size_t res, std::size_t width) {
  const Var grid = ad::reshape(h, {res, res, width});
  const Var pooled = ad::pool_down(grid, ops::PoolMode::kMean);
  return ad::reshape(pooled, {(res / 2) * (res / 2), width});
}

Var upsample(const Var& h, std::size_t res, std::size_t width) {
  const Var grid = ad::reshape(h, {res, res, width});
  return ad::reshape(ad::upsample_nearest(grid), {4 * res * res, width});
}

struct Runner {
  const BoundModel& model;
  const Var& temb;
  const Var& keys;
  const std::vector<StageMasks>& masks;
  const PredictOptions& options;

  Var block(const std::string& prefix, const Var& h, std::size_t stage) const {
    const Var mixed = ad::add(ad::matmul(h, model[prefix + ".mix.w"]), model[prefix + ".mix.b"]);
    const Var timed = ad::add(mixed, ad::matmul(temb, model[prefix + ".time.w"]));
    const Var act = ad::silu(timed);
    const AttentionVars attn{model[prefix + ".attn.q"], model[prefix + ".attn.k"],
                             model[prefix + ".attn.v"], model[prefix + ".attn.o"],
                             model.config().heads, model.config().head_dim};
    AttentionOptions ao;
    ao.mode = options.mode;
    ao.apply_mask = options.apply_mask;
    ao.retain_maps = options.sites != nullptr;
    TapedAttention a = masked_cross_attention(act, keys, masks[stage].applied, attn, ao);
    if (options.sites)
      options.sites->push_back({prefix, model.config().stages[stage], std::move(a.maps),
                                masks[stage].applied, masks[stage].reference});
    return ad::add(act, a.out);
  }

  std::vector<Var> down_path(const std::string& branch, Var h) const {
    const auto& stages = model.config().stages;
    std::vector<Var> skips;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (s > 0) h = pool(h, stages[s - 1], model.config().width);
      h = block(down_name(branch, s), h, s);
      skips.push_back(h);
    }
    return skips;
  }
};

}  // namespace

Var predict_noise(const BoundModel& model, const Tensor& z_t, std::size_t t,
                  const Conditioning& cond, const PredictOptions& options) {
  const ModelConfig& cfg = model.config();
  Tape& tape = model.tape();
  const std::size_t hw = cfg.image_size * cfg.image_size, d = cfg.width;
  if (z_t.shape() != Shape{cfg.image_size, cfg.image_size, cfg.channels})
    throw ShapeError("predict_noise: z_t must be [" + std::to_string(cfg.image_size) + " x " +
                     std::to_string(cfg.image_size) + " x " + std::to_string(cfg.channels) +
                     "], got " + shape_string(z_t.shape()));
  if (cond.control.shape() != Shape{cfg.image_size, cfg.image_size, 3})
    throw ShapeError("predict_noise: control image must be [H x W x 3], got " +
                     shape_string(cond.control.shape()));

  StackLayout layout;
  const Var keys = embed_conditioning(model, cond, layout);
  const auto masks = stage_masks(cfg, cond, layout, options.ablate_mask);
  const Var temb = tape.constant(timestep_embedding(t, cfg.time_dim));
  const Runner run{model, temb, keys, masks, options};

  const Var z = tape.constant(z_t.reshaped({hw, cfg.channels}));
  const Var c = tape.constant(cond.control.reshaped({hw, 3}));

  // Control branch.
  const Var hint = ad::add(ad::matmul(c, model["ctrl.hint.w"]), model["ctrl.hint.b"]);
  const Var c_in =
      ad::add(ad::add(ad::matmul(z, model["ctrl.in.w"]), model["ctrl.in.b"]), hint);
  const std::vector<Var> ctrl = run.down_path("ctrl", c_in);

  // Main branch.
  const Var m_in = ad::add(ad::matmul(z, model["main.in.w"]), model["main.in.b"]);
  std::vector<Var> skips = run.down_path("main", m_in);
  for (std::size_t s = 0; s < skips.size(); ++s) {
    const std::string fuse = "ctrl.fuse" + std::to_string(s);
    const Var injected = ad::add(ad::matmul(ctrl[s], model[fuse + ".w"]), model[fuse + ".b"]);
    skips[s] = ad::add(skips[s], injected);
  }

  Var h = skips.back();
  for (std::size_t s = cfg.stages.size() - 1; s-- > 0;) {
    h = ad::add(upsample(h, cfg.stages[s + 1], d), skips[s]);
    h = run.block("main.up" + std::to_string(s), h, s);
  }
  const Var out = ad::add(ad::matmul(h, model["main.out.w"]), model["main.out.b"]);
  return ad::reshape(out, {cfg.image_size, cfg.image_size, cfg.channels});
}

Tensor predict_noise(const ToyDenoiser& model, const Tensor& z_t, std::size_t t,
                     const Conditioning& cond, const PredictOptions& options) {
  Tape tape;
  const BoundModel bound(model, tape, false);
  return predict_noise(bound, z_t, t, cond, options).value();
}

}  // namespace mia
