#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mia/attention.hpp"
#include "mia/denoiser.hpp"
#include "mia/pose.hpp"
#include "mia/record.hpp"
#include "mia/schedule.hpp"

namespace mia {

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch = 4;
  double learning_rate = 0.05;
  Optimizer optimizer = Optimizer::kSgd;
  std::uint64_t seed = 0;
  /// N: identity slots per sample.
  std::size_t capacity = 4;
  /// Total growth of each face box before rasterizing its mask.
  double margin = 0.25;
  /// Train with every M replaced by all ones.
  bool ablate_mask = false;

  bool operator==(const TrainConfig&) const = default;
};

/// Conditioning for one sample. Slot s holds faces[order[s]]'s identity
/// feature and mask; every face contributes its pose; `circles` chooses the
/// colored centers.
Conditioning make_conditioning(const ModelConfig& config, const TextEmbedding& text,
                               std::span<const AnnotatedFace> faces,
                               std::span<const std::size_t> order,
                               std::span<const Circle> circles, double margin);

/// Model plus the optimizer state needed to continue training exactly.
struct TrainerState {
  TrainerState() = default;
  explicit TrainerState(ToyDenoiser initial) : model(std::move(initial)) {}

  ToyDenoiser model;
  std::size_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// Raised when the loss stops being finite; carries the trace up to that point.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace(std::move(trace)) {}
  std::vector<double> trace;
};

/// One training example: record, chosen faces, timestep and noise.
struct TrainingSample {
  const AnnotatedRecord* record = nullptr;
  FaceSelection selection;
  std::size_t t = 1;
  Tensor noise;
};

/// Draws the samples of step `step`. Depends only on (seed, step), so a
/// resumed run sees the same batches as an uninterrupted one.
std::vector<TrainingSample> draw_batch(std::span<const AnnotatedRecord> dataset,
                                       const TrainConfig& config, const NoiseSchedule& schedule,
                                       std::size_t step);

/// Mean over the batch of ||eps - eps_hat||^2 / n on the model's tape.
Var training_loss(const BoundModel& model, std::span<const TrainingSample> batch,
                  const TrainConfig& config, const NoiseSchedule& schedule,
                  const ToyTextEncoder& text_encoder);

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Runs optimizer steps until state.step == config.steps and returns the loss
/// of each step run.
std::vector<double> train(TrainerState& state, std::span<const AnnotatedRecord> dataset,
                          const TrainConfig& config, const NoiseSchedule& schedule,
                          const StepCallback& on_step = {});

/// Loss on a fixed, seed-determined set of samples; no parameter update.
double evaluation_loss(const ToyDenoiser& model, std::span<const AnnotatedRecord> dataset,
                       const TrainConfig& config, const NoiseSchedule& schedule,
                       std::uint64_t seed, std::size_t samples);

/// Attention concentration over records with at least two faces, all faces
/// stacked in annotation order, at the given timesteps. Every attention site
/// of both branches contributes unless `branch` ("main" or "ctrl") narrows it.
ConcentrationSummary measure_routing(const ToyDenoiser& model,
                                     std::span<const AnnotatedRecord> records,
                                     const TrainConfig& config, const NoiseSchedule& schedule,
                                     std::span<const std::size_t> timesteps, std::uint64_t seed,
                                     const std::string& branch = "");

/// Ancestral sampling from pure noise over `steps` evenly strided timesteps.
Tensor sample(const ToyDenoiser& model, const Conditioning& cond, const NoiseSchedule& schedule,
              std::size_t steps, std::uint64_t seed, const PredictOptions& options = {});

/// The strided timesteps used by sample(), descending.
std::vector<std::size_t> sampling_timesteps(std::size_t schedule_steps, std::size_t steps);

}  // namespace mia
