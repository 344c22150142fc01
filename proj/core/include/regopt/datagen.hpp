#pragma once

#include "regopt/moments.hpp"
#include "regopt/rng.hpp"
#include "regopt/types.hpp"

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace regopt::datagen {

// Full discrete convolution with zero extension: output length m = n + len − 1,
// matrix entry (i, j) = kernel[i − j] where defined.
struct ConvolutionOperator {
  ConvolutionOperator(Vector kernel_in, Index n_in);

  Index n() const { return input_dim; }
  Index m() const { return input_dim + kernel.size() - 1; }
  const GeneralMatrix& matrix() const { return realization; }

  Vector kernel;
  Index input_dim;
  GeneralMatrix realization;
};

// Symmetric triangular ramp (1,2,…,h,h,…,2,1) of length 2h, normalized to sum
// exactly one (the last entry absorbs rounding).
Vector hat_kernel(int halfwidth);

/// Decaying-echo kernel: v₁ = 1, v_{50i} = 0.8^i for i = 1..10, zero elsewhere.
Vector reverb_kernel(Index n = 500);

// Piecewise-constant nonnegative signal on the midpoint grid t_j = (j−½)/n:
// k ~ Unif{2..5} intervals [c−b, c+b] with heights a² + 0.01,
// a ~ N(0,1), b ~ Unif[0,1], c ~ Unif[0, 0.15].
Vector gen_plateau_signal(CounterRng& rng, Index n = 200);

/// Deterministic synthesis from already-drawn interval parameters.
Vector plateau_signal(const std::vector<double>& heights, const std::vector<double>& lo,
                      const std::vector<double>& hi, Index n);

/// diag(σ_i²) with σ_i decaying linearly from σ_first to σ_last.
SymmetricMatrix linear_decay_noise_cov(Index m, double sigma_first = 1e-2,
                                       double sigma_last = 5e-4);

/// Cumulative sum of i.i.d. standard normals, scaled so ‖b‖_∞ = 1.
Vector normalized_brownian(CounterRng& rng, Index length);

/// Zero-phase DFT hard mask keeping bins with |frequency| ≤ cutoff_hz.
Vector lowpass_dft(const Vector& x, double cutoff_hz, double rate_hz);

// Baseline 0.2 plus 1–5 raised-cosine bursts (centers uniform over the signal,
// widths 100–400 samples, peak amplitudes 0.5–1.5). forced_bursts ≥ 0 overrides
// the burst-count draw (test hook).
Vector bursty_envelope(CounterRng& rng, Index length, int forced_bursts = -1);

// Wind noise: normalized Brownian base, low-pass mask, bursty envelope, then
// w_t = b_LP,t · e_t · (1 + (1/10)·sin(2π f_t (t−1)/rate + φ_t)) + ε_t/1000 with
// per-sample f_t ~ Unif[0.1, 0.5], φ_t ~ Unif[0, 2π], ε_t ~ N(0,1).
Vector gen_wind_noise(CounterRng& rng, Index length, double cutoff_hz = 3000,
                      double rate_hz = 8000);

// Speech-like stand-in frames: 3–8 Hann-windowed sinusoid bursts, 80–3500 Hz at
// 8 kHz, normalized to max-abs 1.
Vector gen_speech_like(CounterRng& rng, Index n = 500, double rate_hz = 8000);

struct DiagonalLinearDecay {
  double sigma_first = 1e-2;
  double sigma_last = 5e-4;
};
struct WindNoise {
  double cutoff_hz = 3000;
  double rate_hz = 8000;
};
struct WhiteGaussian {
  double sigma = 1.0;
};
using NoiseModel = std::variant<DiagonalLinearDecay, WindNoise, WhiteGaussian>;

std::string noise_model_name(const NoiseModel& model);

// Measurements y_i = A x†_i + noise. Wind noise enters scaled by eta; the
// Gaussian models ignore eta (recorded as 1). Sample i draws from substream i
// of (seed), so parallel and serial generation agree bitwise.
PairedDataset make_dataset(const Matrix& signals, const ConvolutionOperator& op,
                           const NoiseModel& noise, double eta, std::uint64_t seed,
                           const std::string& generator_id);

/// N plateau signals (rows) from per-sample substreams of seed.
Matrix gen_plateau_signals(Index count, Index n, std::uint64_t seed);

/// N speech-like frames (rows) from per-sample substreams of seed.
Matrix gen_speech_like_signals(Index count, Index n, std::uint64_t seed);

// Mono 16 kHz PCM/float WAV → max-abs-normalized frames of frame_len samples
// (trailing partial frame dropped), decimated by keeping every downsample-th
// sample starting at the first. Returns one frame per row.
Matrix ingest_wav(const std::filesystem::path& path, Index frame_len = 1000,
                  Index downsample = 2);

}  // namespace regopt::datagen
