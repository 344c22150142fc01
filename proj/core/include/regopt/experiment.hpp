#pragma once

#include "regopt/datagen.hpp"
#include "regopt/trainer.hpp"
#include "regopt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace regopt::cli {

struct MethodSelection {
  std::vector<std::string> optimal;  // lmmse | lav | quad | tikh-weighted
  std::vector<std::string> learned;  // aff | lav | quad | tikh
};

struct DeconvSettings {
  Index n = 200;
  int hat_halfwidth = 30;
  double sigma_first = 1e-2;
  double sigma_last = 5e-4;
};

struct DereverbSettings {
  Index n = 500;
  std::vector<double> eta_levels = {0.1, 0.2, 0.3, 0.4, 0.5};
  double cutoff_hz = 3000;
  double rate_hz = 8000;
  std::string signal_source = "synthetic";  // "synthetic" or "wav:<directory>"
};

struct CustomSettings {
  Index n = 50;
  std::string kernel = "hat";      // hat | reverb
  int hat_halfwidth = 5;
  std::string signal = "plateau";  // plateau | speech
  std::string noise = "white";     // white | diag-linear-decay | wind
  double white_sigma = 0.1;
  double sigma_first = 1e-2;
  double sigma_last = 5e-4;
  std::vector<double> eta_levels = {1.0};  // wind noise only
  // Use the analytic noise covariance instead of the residual estimate when
  // fitting (white and diag-linear-decay models only).
  bool known_noise_cov = false;
};

struct ExperimentConfig {
  std::string experiment = "deconv";  // deconv | dereverb | custom
  Index train_size = 1000;
  Index test_size = 500;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  double jitter_rel = kDefaultJitterRel;
  bool deterministic = true;
  MethodSelection methods;
  DeconvSettings deconv;
  DereverbSettings dereverb;
  CustomSettings custom;
  train::TrainConfig train;
};

/// Built-in presets: deconv, deconv-small, dereverb, dereverb-small.
ExperimentConfig preset(const std::string& name);

/// Parses and validates a JSON config; errors carry the offending key path.
ExperimentConfig load_config(const std::filesystem::path& path);

void validate(const ExperimentConfig& config);

/// 64-bit FNV-1a over the canonical JSON form, as fixed-width hex.
std::string config_hash(const ExperimentConfig& config);

std::string config_to_json(const ExperimentConfig& config);

// Subcommand entry points. Each writes into config.output_dir; all file writes
// are atomic (temp file + rename).
void run_generate(const ExperimentConfig& config);
void run_fit_optimal(const ExperimentConfig& config);
void run_train(const ExperimentConfig& config);
void run_report(const std::filesystem::path& output_dir);

}  // namespace regopt::cli
