#include "mia/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mia {

namespace {

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Tensor gaussian_like(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(shape);
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

Conditioning sample_conditioning(const ModelConfig& model, const TrainingSample& s,
                                 const TrainConfig& config, const ToyTextEncoder& text_encoder) {
  const auto circles = circles_for_order(s.selection.order);
  return make_conditioning(model, text_encoder.encode(s.record->caption), s.record->faces,
                           s.selection.order, circles, config.margin);
}

}  // namespace

Conditioning make_conditioning(const ModelConfig& config, const TextEmbedding& text,
                               std::span<const AnnotatedFace> faces,
                               std::span<const std::size_t> order,
                               std::span<const Circle> circles, double margin) {
  const std::size_t size = config.image_size;
  Conditioning cond;
  cond.text = text;
  for (auto idx : order) {
    if (idx >= faces.size()) throw std::out_of_range("stacking order refers to a missing face");
    const AnnotatedFace& face = faces[idx];
    cond.faces.push_back(face.feature);
    const FaceBox box = expand_box(face.box, margin, size, size);
    cond.masks.push_back(build_pyramid(rasterize_mask(box, size, size, cond.masks.size()),
                                       config.stages));
  }
  cond.control = render_pose_control(faces, circles, size, size).image;
  return cond;
}

std::vector<TrainingSample> draw_batch(std::span<const AnnotatedRecord> dataset,
                                       const TrainConfig& config, const NoiseSchedule& schedule,
                                       std::size_t step) {
  if (dataset.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  auto rng = step_rng(config.seed, step, 0);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_int_distribution<std::size_t> tdist(1, schedule.steps());
  std::vector<TrainingSample> batch;
  for (std::size_t b = 0; b < config.batch; ++b) {
    TrainingSample s;
    s.record = &dataset[pick(rng)];
    s.selection = select_and_order_faces(s.record->faces.size(), config.capacity, rng);
    s.t = tdist(rng);
    s.noise = gaussian_like(s.record->image.shape(), rng);
    batch.push_back(std::move(s));
  }
  return batch;
}

Var training_loss(const BoundModel& model, std::span<const TrainingSample> batch,
                  const TrainConfig& config, const NoiseSchedule& schedule,
                  const ToyTextEncoder& text_encoder) {
  if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
  Tape& tape = model.tape();
  PredictOptions options;
  options.ablate_mask = config.ablate_mask;
  std::vector<Var> losses;
  for (const auto& s : batch) {
    const Conditioning cond = sample_conditioning(model.config(), s, config, text_encoder);
    const Tensor z_t = add_noise(s.record->image, s.t, s.noise, schedule);
    const Var eps_hat = predict_noise(model, z_t, s.t, cond, options);
    losses.push_back(ad::mse(eps_hat, tape.constant(s.noise)));
  }
  if (losses.size() == 1) return losses.front();
  std::vector<Var> rows;
  for (const auto& l : losses) rows.push_back(ad::reshape(l, {1, 1}));
  return ad::scale(ad::sum(ad::concat_rows(rows)), 1.0 / static_cast<double>(losses.size()));
}

std::vector<double> train(TrainerState& state, std::span<const AnnotatedRecord> dataset,
                          const TrainConfig& config, const NoiseSchedule& schedule,
                          const StepCallback& on_step) {
  const ModelConfig& mc = state.model.config();
  const ToyTextEncoder text_encoder(mc.text_len, mc.key_dim);
  std::vector<double> trace;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  while (state.step < config.steps) {
    const auto batch = draw_batch(dataset, config, schedule, state.step);
    Tape tape;
    const BoundModel bound(state.model, tape, true);
    double loss_value = 0.0;
    Gradients grads;
    try {
      const Var loss = training_loss(bound, batch, config, schedule, text_encoder);
      loss_value = loss.value()[0];
      grads = tape.backward(loss);
    } catch (const NumericError& e) {
      std::ostringstream msg;
      msg << "training diverged at step " << state.step << ": " << e.what();
      throw TrainingDiverged(msg.str(), trace);
    }

    const double t = static_cast<double>(state.step + 1);
    for (auto& [name, param] : state.model.parameters()) {
      const Tensor& g = grads.of(bound[name]);
      auto p = param.data();
      if (config.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * g[i];
      } else {
        auto [m_it, m_new] = state.first_moment.try_emplace(name, param.shape(), 0.0);
        auto [v_it, v_new] = state.second_moment.try_emplace(name, param.shape(), 0.0);
        auto m = m_it->second.data();
        auto v = v_it->second.data();
        const double c1 = 1.0 - std::pow(kBeta1, t), c2 = 1.0 - std::pow(kBeta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
          v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
          p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
      }
    }
    trace.push_back(loss_value);
    if (on_step) on_step(state.step, loss_value);
    ++state.step;
  }
  return trace;
}

double evaluation_loss(const ToyDenoiser& model, std::span<const AnnotatedRecord> dataset,
                       const TrainConfig& config, const NoiseSchedule& schedule,
                       std::uint64_t seed, std::size_t samples) {
  TrainConfig eval = config;
  eval.seed = seed;
  eval.batch = samples;
  const auto batch = draw_batch(dataset, eval, schedule, 0);
  const ToyTextEncoder text_encoder(model.config().text_len, model.config().key_dim);
  Tape tape;
  const BoundModel bound(model, tape, false);
  return training_loss(bound, batch, eval, schedule, text_encoder).value()[0];
}

ConcentrationSummary measure_routing(const ToyDenoiser& model,
                                     std::span<const AnnotatedRecord> records,
                                     const TrainConfig& config, const NoiseSchedule& schedule,
                                     std::span<const std::size_t> timesteps, std::uint64_t seed,
                                     const std::string& branch) {
  const ModelConfig& mc = model.config();
  const ToyTextEncoder text_encoder(mc.text_len, mc.key_dim);
  ConcentrationSummary summary;
  std::mt19937_64 rng(seed);
  for (const auto& rec : records) {
    if (rec.faces.size() < 2) continue;
    std::vector<std::size_t> order;
    for (std::size_t f = 0; f < std::min(rec.faces.size(), config.capacity); ++f) order.push_back(f);
    const auto circles = circles_for_order(order);
    const Conditioning cond = make_conditioning(mc, text_encoder.encode(rec.caption), rec.faces,
                                                order, circles, config.margin);
    for (auto t : timesteps) {
      const Tensor noise = gaussian_like(rec.image.shape(), rng);
      std::vector<AttentionSite> sites;
      PredictOptions options;
      options.ablate_mask = config.ablate_mask;
      options.sites = &sites;
      predict_noise(model, add_noise(rec.image, t, noise, schedule), t, cond, options);
      for (const auto& site : sites) {
        if (!branch.empty() && site.name.rfind(branch + ".", 0) != 0) continue;
        for (const auto& face : attention_concentration(site.maps, site.reference))
          summary.merge(face);
      }
    }
  }
  return summary;
}

std::vector<std::size_t> sampling_timesteps(std::size_t schedule_steps, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("sampling needs at least one step");
  if (steps > schedule_steps)
    throw std::invalid_argument("sampling steps exceed the schedule length");
  std::vector<std::size_t> ts;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = static_cast<double>(steps - i) / static_cast<double>(steps);
    ts.push_back(static_cast<std::size_t>(std::llround(frac * static_cast<double>(schedule_steps))));
  }
  return ts;
}

Tensor sample(const ToyDenoiser& model, const Conditioning& cond, const NoiseSchedule& schedule,
              std::size_t steps, std::uint64_t seed, const PredictOptions& options) {
  const ModelConfig& mc = model.config();
  const auto ts = sampling_timesteps(schedule.steps(), steps);
  std::mt19937_64 rng(seed);
  Tensor z = gaussian_like({mc.image_size, mc.image_size, mc.channels}, rng);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t t = ts[i];
    const std::size_t prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    const double bar = schedule.alpha_bar(t), bar_prev = schedule.alpha_bar(prev);
    const Tensor eps = predict_noise(model, z, t, cond, options);

    Tensor next = z;
    const double sqrt_bar = std::sqrt(bar), sqrt_one_minus = std::sqrt(1.0 - bar);
    if (prev == 0) {
      for (std::size_t k = 0; k < z.size(); ++k) next[k] = (z[k] - sqrt_one_minus * eps[k]) / sqrt_bar;
    } else {
      const double alpha = bar / bar_prev;
      const double beta = 1.0 - alpha;
      const double coef_x0 = std::sqrt(bar_prev) * beta / (1.0 - bar);
      const double coef_z = std::sqrt(alpha) * (1.0 - bar_prev) / (1.0 - bar);
      const double sigma = std::sqrt(beta * (1.0 - bar_prev) / (1.0 - bar));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double x0 = (z[k] - sqrt_one_minus * eps[k]) / sqrt_bar;
        next[k] = coef_x0 * x0 + coef_z * z[k] + sigma * normal(rng);
      }
    }
    next.require_finite("sample");
    z = std::move(next);
  }
  return z;
}

}  // namespace mia
