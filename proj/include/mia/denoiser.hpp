#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mia/attention.hpp"
#include "mia/autodiff.hpp"
#include "mia/embedding.hpp"
#include "mia/mask.hpp"

namespace mia {

struct ModelConfig {
  std::size_t image_size = 16;
  std::size_t channels = 4;
  std::size_t width = 32;      // hidden features per position
  std::size_t time_dim = 16;   // sinusoidal embedding width
  std::size_t key_dim = 16;    // d_K
  std::size_t global_dim = 8;  // d_gf
  std::size_t local_dim = 4;   // d_lf
  std::size_t grid_side = 2;   // L
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  std::size_t text_len = 4;    // T
  /// Attention resolutions from finest to coarsest; each halves the previous.
  std::vector<std::size_t> stages{16, 8, 4, 2};

  std::size_t block_len() const { return grid_side * grid_side + 1; }
  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Everything the denoiser is conditioned on for one sample. Faces and masks
/// are in stacking order.
struct Conditioning {
  TextEmbedding text;
  std::vector<FaceFeature> faces;
  std::vector<MaskPyramid> masks;
  Tensor control;  // [H x W x 3]
};

/// Attention maps captured during a forward pass.
struct AttentionSite {
  std::string name;  // e.g. "main.down0"
  std::size_t resolution = 0;
  std::vector<Tensor> maps;
  AttentionMask mask;       // the mask the maps were computed with
  AttentionMask reference;  // the face mask, even when the model ran ablated
};

struct PredictOptions {
  /// Replace every M by all ones (mask ablation control).
  bool ablate_mask = false;
  MaskMode mode = MaskMode::kMultiplicative;
  /// False runs the unmasked reference kernel (the mask is ignored entirely).
  bool apply_mask = true;
  /// When set, every attention site appends its maps here.
  std::vector<AttentionSite>* sites = nullptr;
};

/// Noise predictor with a main branch (down and up stages) and a control
/// branch (a copy of the down stages reading the pose raster) that feeds the
/// main skips through zero-initialized projections.
class ToyDenoiser {
 public:
  ToyDenoiser() = default;
  static ToyDenoiser initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  std::map<std::string, Tensor>& parameters() { return params_; }
  const Tensor& parameter(const std::string& name) const;

  ProjectionParams projection() const;

  bool operator==(const ToyDenoiser&) const = default;

 private:
  ModelConfig config_;
  std::map<std::string, Tensor> params_;
};

/// Parameters of a model placed on a tape.
class BoundModel {
 public:
  BoundModel(const ToyDenoiser& model, Tape& tape, bool trainable);
  /// Binds variables that already live on `tape`, one per parameter name.
  BoundModel(const ModelConfig& config, Tape& tape, std::map<std::string, Var> vars);

  const Var& operator[](const std::string& name) const;
  const std::map<std::string, Var>& vars() const { return vars_; }
  const ModelConfig& config() const { return config_; }
  Tape& tape() const { return *tape_; }

 private:
  ModelConfig config_;
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// Sinusoidal embedding of timestep t, [1 x dim].
Tensor timestep_embedding(std::size_t t, std::size_t dim);

/// The stacked keys K for a conditioning, on the model's tape.
Var embed_conditioning(const BoundModel& model, const Conditioning& cond, StackLayout& layout);

/// Predicted noise for z_t [H x W x C]; same shape as z_t.
Var predict_noise(const BoundModel& model, const Tensor& z_t, std::size_t t,
                  const Conditioning& cond, const PredictOptions& options = {});

Tensor predict_noise(const ToyDenoiser& model, const Tensor& z_t, std::size_t t,
                     const Conditioning& cond, const PredictOptions& options = {});

}  // namespace mia
