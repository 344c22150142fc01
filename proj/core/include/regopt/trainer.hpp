#pragma once

#include "regopt/estimators.hpp"
#include "regopt/moments.hpp"
#include "regopt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace regopt::train {

enum class Variant { aff, lav, quad, tikh };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// The learning-rate schedule is per-step cosine decay from initial_lr to zero
// over epochs x ceil(N/batch) updates, no restarts.
struct TrainConfig {
  double initial_lr = 1e-4;
  int batch_size = 32;
  int epochs = 200;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool per_dimension_loss = true;  // 1/(mn) objective; otherwise 1/m
  bool deterministic = true;       // fixed reduction order
  double divergence_factor = 1e6;  // abort when loss exceeds this times the initial loss
};

// One matrix plus one offset vector, interpreted per variant:
//   aff: mat = W (n×m), vec = b
//   lav: mat = M (n×n), vec = c      x̂ = (AᵀA + M)⁻¹(Aᵀy + c)
//   quad: mat = L (n×n), vec = c     x̂ = (AᵀA + ½(L+Lᵀ))⁻¹(Aᵀy + c)
//   tikh: mat = R (n×n), vec = c     x̂ = (AᵀA + RᵀR)⁻¹(Aᵀy + c)
// The offset is the additive c inside the solve; the Mx₀ form is recovered as
// x₀ = M⁻¹c when M is invertible.
struct TrainableParams {
  Variant variant = Variant::aff;
  Matrix mat;
  Vector vec;
};

struct AdamState {
  Matrix m_mat, v_mat;
  Vector m_vec, v_vec;
  std::int64_t step = 0;

  static AdamState zeros_like(const TrainableParams& p);
};

struct LossTrace {
  std::vector<double> step_losses;   // one minibatch loss per update
  std::vector<double> epoch_losses;  // full-train loss; entry 0 is pre-training
  std::vector<std::int64_t> ridge_events;  // steps where the singular-iterate ridge fired
  int smoothing_window = 1;

  /// Centered-as-trailing moving average of step losses over the window.
  std::vector<double> smoothed() const;
};

struct TrainResult {
  TrainableParams params;
  AdamState state;
  LossTrace trace;
  bool diverged = false;
  std::int64_t diverged_step = -1;
};

/// Batch reconstruction; y_batch holds one sample per column (m×B), output n×B.
Matrix forward(const TrainableParams& params, const GeneralMatrix& a, const Matrix& y_batch);

struct LossGrad {
  double loss = 0;
  Matrix grad_mat;
  Vector grad_vec;
};

// Minibatch loss and exact gradients; x_batch/y_batch hold one sample per
// column. One factorization of the system matrix is reused across the batch.
LossGrad loss_and_grad(const TrainableParams& params, const GeneralMatrix& a,
                       const Matrix& x_batch, const Matrix& y_batch,
                       bool per_dimension_loss);

/// Cosine decay: lr0 · ½(1 + cos(π·step/total_steps)); no restarts, floor 0.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0);

/// Full-dataset loss of the current parameters (same normalization as training).
double dataset_loss(const TrainableParams& params, const GeneralMatrix& a,
                    const PairedDataset& dataset, bool per_dimension_loss);

/// The affine map realized by the current parameters (W = S⁻¹Aᵀ, b = S⁻¹c).
AffineMap effective_map(const TrainableParams& params, const GeneralMatrix& a);

TrainResult train(const PairedDataset& dataset, const GeneralMatrix& a,
                  const TrainConfig& config, TrainableParams init);

/// Scale-matched initial Tikhonov factor: α·I with ‖RᵀR‖_Fro = 0.1·‖AᵀA‖_Fro.
Matrix initial_tikhonov_factor(const GeneralMatrix& a);

struct ChainResult {
  TrainResult tikh, quad, lav, aff;  // trained in this order
};

// Warm-start protocol: train Tikh from tikh_init (scaled identity by default),
// then Quad with L = RᵀR, then Lav with M = L, then Aff with W = (AᵀA+M)⁻¹Aᵀ,
// b = (AᵀA+M)⁻¹c; the offset state carries through every handoff.
ChainResult warm_start_chain(const PairedDataset& dataset, const GeneralMatrix& a,
                             const TrainConfig& config,
                             const Matrix* tikh_init = nullptr);

struct Checkpoint {
  TrainableParams params;
  AdamState state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace regopt::train
