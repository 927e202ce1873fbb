// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mia/attention.hpp"
#include "mia/grad_suite.hpp"
#include "mia/inference.hpp"
#include "mia/io.hpp"
#include "mia/mask.hpp"
#include "mia/metrics.hpp"
#include "mia/pose.hpp"
#include "mia/synthetic.hpp"
#include "mia/training.hpp"

using namespace mia;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

struct AttentionProblem {
  Tensor x;
  EmbeddingStack keys;
  AttentionMask mask;
  AttentionParams params;
};

AttentionProblem random_attention(std::size_t faces, std::size_t r, std::mt19937_64& rng) {
  AttentionProblem p;
  p.x = gaussian({r * r, 16}, rng);
  p.keys.layout = {4, 5, faces};
  p.keys.keys = gaussian({p.keys.layout.keys(), 16}, rng);
  std::bernoulli_distribution coin(0.3);
  std::vector<SpatialMask> masks;
  for (std::size_t f = 0; f < faces; ++f) {
    SpatialMask m{Tensor({r, r}, 0.0), f};
    for (auto& v : m.grid.data()) v = coin(rng) ? 1.0 : 0.0;
    masks.push_back(m);
  }
  p.mask = assemble_attention_mask(4, 5, r, masks);
  p.params = AttentionParams::random(16, 16, 4, 8, rng);
  return p;
}

void kernel_fidelity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  bool bitwise = true;
  double worst_sum = 0.0;
  for (std::size_t faces = 0; faces <= 8; ++faces) {
    AttentionProblem p = random_attention(faces, 8, rng);
    AttentionOptions masked, reference;
    masked.retain_maps = reference.retain_maps = true;
    reference.apply_mask = false;
    // Row sums are checked under the random face mask.
    for (const auto& map : masked_cross_attention(p.x, p.keys, p.mask, p.params, masked).maps)
      for (std::size_t q = 0; q < map.rows(); ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < map.cols(); ++k) s += map.at(q, k);
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    p.mask = all_ones_mask(p.x.rows(), p.keys.layout);
    const AttentionOutput a = masked_cross_attention(p.x, p.keys, p.mask, p.params, masked);
    const AttentionOutput b = masked_cross_attention(p.x, p.keys, p.mask, p.params, reference);
    bitwise = bitwise && a.out == b.out;
    for (std::size_t h = 0; h < a.maps.size(); ++h) bitwise = bitwise && a.maps[h] == b.maps[h];
  }
  const double secs = seconds_since(start);
  report(1, "kernel fidelity", bitwise && worst_sum <= 1e-12 && secs < 1.0,
         fmt("all-ones bitwise equal to unmasked: %s, max |row sum - 1| = %.3g (<= 1e-12), %.3f s (< 1 s)",
             bitwise ? "yes" : "no", worst_sum, secs));
}

void gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0, failed = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GradSuiteOptions o;
    o.seed = seed;
    o.step = 1e-6;
    o.tolerance = 1e-5;
    for (const auto& e : run_gradient_suite(o)) {
      ++checks;
      failed += !e.passed;
      if (e.result.max_rel_error >= worst) {
        worst = e.result.max_rel_error;
        worst_name = e.name;
      }
    }
  }
  const double secs = seconds_since(start);
  report(2, "gradient suite", failed == 0 && worst < 1e-5 && secs < 60.0,
         fmt("%zu checks over 10 seeds, %zu failed, max rel error %.3g (%s) < 1e-5, h = 1e-6, %.1f s (< 60 s)",
             checks, failed, worst, worst_name.c_str(), secs));
}

void mask_oracle() {
  std::mt19937_64 rng(512);
  const std::size_t levels[] = {64, 32, 16, 8};
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_real_distribution<double> extent(1.0, 170.0);
    const double w = extent(rng), h = extent(rng);
    std::uniform_real_distribution<double> px(0.0, 512.0 - w), py(0.0, 512.0 - h);
    const double x0 = px(rng), y0 = py(rng);
    const SpatialMask base = rasterize_mask({x0, y0, x0 + w, y0 + h}, 512, 512, 0);
    const MaskPyramid pyramid = build_pyramid(base, levels);
    for (auto r : levels) {
      // Brute force: a target cell is set iff any source cell it covers is set.
      const std::size_t f = 512 / r;
      Tensor oracle({r, r}, 0.0);
      for (std::size_t y = 0; y < 512; ++y)
        for (std::size_t x = 0; x < 512; ++x)
          if (base.grid.at(y, x) == 1.0) oracle.at(y / f, x / f) = 1.0;
      mismatches += !(pyramid.at(r).grid == oracle);
    }
  }
  std::size_t layout_mismatches = 0;
  const ProjectionParams proj = ProjectionParams::random(8, 4, 16, rng);
  for (std::size_t n = 0; n <= 8; ++n) {
    std::vector<SpatialMask> masks;
    std::vector<FaceTokenBlock> blocks;
    for (std::size_t f = 0; f < n; ++f) {
      masks.push_back(rasterize_mask({double(f), 0.0, f + 4.0, 4.0}, 8, 8, f));
      blocks.push_back(project_face(FaceFeature{gaussian({1, 8}, rng), gaussian({4, 4}, rng), ""}, proj));
    }
    const AttentionMask m = assemble_attention_mask(4, 5, 8, masks);
    const EmbeddingStack k = stack_embeddings(TextEmbedding{gaussian({4, 16}, rng)}, blocks);
    layout_mismatches += !(m.layout == k.layout) || m.values.cols() != k.keys.rows() ||
                         k.keys.rows() != 4 + 5 * n;
  }
  report(3, "mask oracle", mismatches == 0 && layout_mismatches == 0,
         fmt("100 boxes x 4 levels {64,32,16,8}: %zu mismatches vs brute-force max-pool; "
             "layout congruence N = 0..8: %zu mismatches",
             mismatches, layout_mismatches));
}

void metric_identities() {
  const PassthroughEncoder enc(2);
  const double perfect = multi_sim(Tensor::row({1, 0}), Tensor::row({0, 1}), Tensor::row({1, 0}),
                                   Tensor::row({0, 1}), enc);
  const Tensor same = Tensor::row({0.6, 0.8});
  const double mixed = multi_sim(same, same, same, same, enc);
  const double hand = multi_sim(Tensor::row({1, 0}), Tensor::row({0, 1}), Tensor::row({0.8, 0.6}),
                                Tensor::row({0.6, 0.8}), enc);
  const PassthroughEncoder enc8(8);
  std::mt19937_64 rng(11);
  double lo = 3.0, hi = -1.0;
  auto unit = [&] {
    Tensor t = gaussian({1, 8}, rng);
    double n = 0.0;
    for (double v : t.values()) n += v * v;
    for (auto& v : t.data()) v /= std::sqrt(n);
    return t;
  };
  for (int i = 0; i < 100000; ++i) {
    const double m = multi_sim(unit(), unit(), unit(), unit(), enc8);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  const bool pass = perfect == 2.0 && mixed == 1.0 && std::abs(hand - 0.84) <= 1e-12 && lo >= -1.0 && hi <= 3.0;
  report(4, "metric identities", pass,
         fmt("perfect = %.17g (2 exact), mixing = %.17g (1 exact), hand case |%.15f - 0.84| = %.2g (<= 1e-12), "
             "10^5 draws in [%.4f, %.4f] within [-1, 3]",
             perfect, mixed, hand, std::abs(hand - 0.84), lo, hi));
}

/// Every zero-masked key in a query row carries the same weight.
std::size_t uniformity_violations(const std::vector<Tensor>& maps, const AttentionMask& mask,
                                  std::size_t& rows_checked) {
  std::size_t bad = 0;
  for (const auto& map : maps)
    for (std::size_t q = 0; q < map.rows(); ++q) {
      bool has_zero_face = false;
      for (std::size_t f = 0; f < mask.layout.faces; ++f)
        has_zero_face = has_zero_face || mask.values.at(q, mask.layout.block_begin(f)) == 0.0;
      if (!has_zero_face) continue;
      ++rows_checked;
      double first = -1.0;
      for (std::size_t k = 0; k < map.cols(); ++k) {
        if (mask.values.at(q, k) != 0.0) continue;
        if (first < 0.0) first = map.at(q, k);
        bad += map.at(q, k) != first;
      }
    }
  return bad;
}

void masked_key_uniformity(const ToyDenoiser& model, const std::vector<AnnotatedRecord>& data) {
  std::mt19937_64 rng(5);
  std::size_t rows = 0, bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionProblem p = random_attention(1 + trial % 8, 8, rng);
    AttentionOptions o;
    o.retain_maps = true;
    bad += uniformity_violations(masked_cross_attention(p.x, p.keys, p.mask, p.params, o).maps, p.mask, rows);
  }
  // Every attention site of the denoiser, both branches.
  const ModelConfig& mc = model.config();
  const ToyTextEncoder text(mc.text_len, mc.key_dim);
  const NoiseSchedule schedule = NoiseSchedule::linear(100, 1e-4, 0.02);
  std::size_t records = 0;
  for (const auto& rec : data) {
    if (rec.faces.size() < 2 || records++ >= 8) continue;
    std::vector<std::size_t> order(std::min<std::size_t>(rec.faces.size(), 4));
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Conditioning cond =
        make_conditioning(mc, text.encode(rec.caption), rec.faces, order, circles_for_order(order), 0.25);
    std::vector<AttentionSite> sites;
    PredictOptions o;
    o.sites = &sites;
    predict_noise(model, add_noise(rec.image, 30, gaussian(rec.image.shape(), rng), schedule), 30, cond, o);
    for (const auto& s : sites) bad += uniformity_violations(s.maps, s.mask, rows);
  }
  report(5, "masked-key uniformity", bad == 0 && rows > 0,
         fmt("%zu query rows with a zero face-mask entry checked (random kernels and denoiser sites), "
             "%zu unequal zero-masked weights",
             rows, bad));
}

struct RoutingRun {
  ToyDenoiser model;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double trace_first = 0.0;
  double trace_tail = 0.0;
  double ratio = 0.0;
  double ratio_main = 0.0;
  double ratio_ctrl = 0.0;
  double seconds = 0.0;
};

RoutingRun routing_run(const Config& cfg, const std::vector<AnnotatedRecord>& data) {
  const auto start = Clock::now();
  const NoiseSchedule schedule = cfg.schedule.build();
  RoutingRun r;
  TrainerState state{ToyDenoiser::initialize(cfg.model, 1)};
  r.loss_before = evaluation_loss(state.model, data, cfg.train, schedule, 99, 64);
  const auto trace = train(state, data, cfg.train, schedule);
  r.loss_after = evaluation_loss(state.model, data, cfg.train, schedule, 99, 64);
  r.trace_first = trace.front();
  const std::size_t tail = std::min<std::size_t>(100, trace.size());
  r.trace_tail = std::accumulate(trace.end() - tail, trace.end(), 0.0) / tail;
  const std::vector<std::size_t> ts{10, 30, 60};
  r.ratio = measure_routing(state.model, data, cfg.train, schedule, ts, 7).ratio();
  r.ratio_main = measure_routing(state.model, data, cfg.train, schedule, ts, 7, "main").ratio();
  r.ratio_ctrl = measure_routing(state.model, data, cfg.train, schedule, ts, 7, "ctrl").ratio();
  r.model = std::move(state.model);
  r.seconds = seconds_since(start);
  return r;
}

ToyDenoiser routing_experiment(const std::vector<AnnotatedRecord>& data) {
  Config cfg;
  cfg.train.steps = 5000;
  cfg.train.batch = 4;
  cfg.train.optimizer = Optimizer::kAdam;
  cfg.train.learning_rate = 0.005;
  cfg.train.capacity = 4;
  Config ablated = cfg;
  ablated.train.ablate_mask = true;

  const RoutingRun m = routing_run(cfg, data);
  const RoutingRun a = routing_run(ablated, data);
  std::printf("  masked : eval loss %.4f -> %.4f, train loss %.4f -> %.4f (last 100), ratio %.3f "
              "(main %.3f, ctrl %.3f), %.0f s\n",
              m.loss_before, m.loss_after, m.trace_first, m.trace_tail, m.ratio, m.ratio_main, m.ratio_ctrl,
              m.seconds);
  std::printf("  ablated: eval loss %.4f -> %.4f, train loss %.4f -> %.4f (last 100), ratio %.3f "
              "(main %.3f, ctrl %.3f), %.0f s\n",
              a.loss_before, a.loss_after, a.trace_first, a.trace_tail, a.ratio, a.ratio_main, a.ratio_ctrl,
              a.seconds);
  const bool loss_ok = m.loss_after < m.loss_before && m.trace_tail < m.trace_first;
  const bool ratio_ok = m.ratio >= 2.0;
  const bool control_ok = a.ratio < m.ratio;
  const double minutes = (m.seconds + a.seconds) / 60.0;
  report(6, "routing experiment", loss_ok && ratio_ok && control_ok,
         fmt("(a) loss %.4f -> %.4f: %s; (b) matching/foreign = %.3f (>= 2): %s; "
             "(c) ablated ratio %.3f < %.3f: %s; 5000 steps each, %.1f min",
             m.loss_before, m.loss_after, loss_ok ? "ok" : "no", m.ratio, ratio_ok ? "ok" : "no", a.ratio,
             m.ratio, control_ok ? "ok" : "no", minutes));
  return m.model;
}

void seven_identities(const ToyDenoiser& model) {
  const ModelConfig& mc = model.config();
  const ToyFaceEncoder encoder(mc.channels, mc.grid_side, mc.global_dim, mc.local_dim);
  InferenceRequest request;
  request.caption = "seven people";
  request.sample_steps = 10;
  request.seed = 3;
  for (std::size_t i = 0; i < 7; ++i) {
    const double x = static_cast<double>(i % 4) * 4.0, y = static_cast<double>(i / 4) * 8.0;
    AnnotatedFace face;
    face.box = {x, y + 1.0, x + 3.0, y + 4.0};
    face.keypoints = {{x + 1.5, y + 2.5, 1.0}, {x + 1.5, y + 6.0, 1.0}};
    face.identity = identity_label(i % 2);
    request.pose_faces.push_back(face);
    request.identities.push_back(encoder.encode(identity_template(i, mc.channels, template_side(mc.grid_side)),
                                                "p" + std::to_string(i)));
  }
  const InferenceResult r = run_inference(model, NoiseSchedule::linear(100, 1e-4, 0.02), request);
  const std::size_t expected = mc.text_len + 7 * mc.block_len();
  bool masks_ok = r.masks.size() == mc.stages.size();
  for (std::size_t s = 0; masks_ok && s < r.masks.size(); ++s) {
    const AttentionMask& m = r.masks[s];
    masks_ok = m.layout == r.layout && m.values.cols() == expected &&
               m.values.rows() == mc.stages[s] * mc.stages[s];
    for (std::size_t q = 0; masks_ok && q < m.values.rows(); ++q)
      for (std::size_t k = 0; k < m.values.cols(); ++k) {
        const double v = m.values.at(q, k);
        masks_ok = masks_ok && (v == 0.0 || v == 1.0) && (k >= mc.text_len || v == 1.0);
      }
    for (std::size_t f = 0; masks_ok && f < 7; ++f) {
      bool covered = false;
      for (std::size_t q = 0; q < m.values.rows(); ++q) covered = covered || m.values.at(q, m.layout.block_begin(f)) == 1.0;
      masks_ok = covered;
    }
  }
  const bool finite = std::all_of(r.sample.values().begin(), r.sample.values().end(),
                                  [](double v) { return std::isfinite(v); });
  report(7, "seven-identity inference", r.stack_rows == expected && r.layout.faces == 7 && masks_ok && finite,
         fmt("trained with N = 4; stack rows %zu = %zu + 7 x %zu; masks consistent: %s; finite output: %s",
             r.stack_rows, mc.text_len, mc.block_len(), masks_ok ? "yes" : "no", finite ? "yes" : "no"));
}

void slot_symmetry(const ToyDenoiser& model, const std::vector<AnnotatedRecord>& data) {
  const ModelConfig& mc = model.config();
  const ToyTextEncoder text(mc.text_len, mc.key_dim);
  std::mt19937_64 rng(8);
  std::size_t cases = 0, differ = 0;
  for (const auto& rec : data) {
    if (rec.faces.size() < 3 || cases >= 30) continue;
    std::vector<std::size_t> order(std::min<std::size_t>(rec.faces.size(), 4));
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Each face keeps its circle through the permutation.
    const auto circles = circles_for_order(order);
    std::vector<std::size_t> permuted = order;
    std::shuffle(permuted.begin(), permuted.end(), rng);
    if (permuted == order) std::rotate(permuted.begin(), permuted.begin() + 1, permuted.end());
    const Conditioning a = make_conditioning(mc, text.encode(rec.caption), rec.faces, order, circles, 0.25);
    const Conditioning b = make_conditioning(mc, text.encode(rec.caption), rec.faces, permuted, circles, 0.25);
    const Tensor z = gaussian(rec.image.shape(), rng);
    for (std::size_t t : {1, 25, 75}) {
      ++cases;
      differ += !(predict_noise(model, z, t, a) == predict_noise(model, z, t, b));
    }
  }
  report(8, "slot symmetry", cases > 0 && differ == 0,
         fmt("%zu (record, permutation, t) cases on the trained model, %zu outputs not bit-identical", cases, differ));
}

void zero_init_control(const std::vector<AnnotatedRecord>& data) {
  const ModelConfig mc;
  const ToyTextEncoder text(mc.text_len, mc.key_dim);
  std::mt19937_64 rng(9);
  std::size_t cases = 0, differ = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ToyDenoiser model = ToyDenoiser::initialize(mc, seed);
    for (std::size_t i = 0; i < 4; ++i) {
      const AnnotatedRecord& rec = data[i];
      std::vector<std::size_t> order(std::min<std::size_t>(rec.faces.size(), 4));
      std::iota(order.begin(), order.end(), std::size_t{0});
      Conditioning cond = make_conditioning(mc, text.encode(rec.caption), rec.faces, order,
                                            circles_for_order(order), 0.25);
      const Tensor z = gaussian(rec.image.shape(), rng);
      const Tensor base = predict_noise(model, z, 20, cond);
      for (int k = 0; k < 3; ++k) {
        cond.control = gaussian({mc.image_size, mc.image_size, 3}, rng);
        ++cases;
        differ += !(predict_noise(model, z, 20, cond) == base);
      }
    }
  }
  report(9, "zero-init control invariance", differ == 0,
         fmt("%zu random control rasters at initialization, %zu outputs changed", cases, differ));
}

}  // namespace

int main() {
  SyntheticOptions so;
  const std::vector<AnnotatedRecord> data = make_synthetic_dataset(so);

  kernel_fidelity();
  gradient_suite();
  mask_oracle();
  metric_identities();
  masked_key_uniformity(ToyDenoiser::initialize(ModelConfig{}, 4), data);
  const ToyDenoiser trained = routing_experiment(data);
  seven_identities(trained);
  slot_symmetry(trained, data);
  zero_init_control(data);
  return failures == 0 ? 0 : 1;
}
