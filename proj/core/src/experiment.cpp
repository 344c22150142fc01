#include "regopt/experiment.hpp"

#include "regopt/dataset_io.hpp"
#include "regopt/estimators.hpp"
#include "regopt/linalg.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace regopt::cli {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// small formatting helpers

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string display3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

std::string eta_tag(double eta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", eta);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// config parsing

void check_known_keys(const json& obj, const std::string& path,
                      std::initializer_list<const char*> keys) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) known = true;
    if (!known) throw ConfigError("config: " + path + item.key() + ": unknown field");
  }
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError("config: " + where + ": expected a number");
  return j.get<double>();
}

template <typename T>
void assign_int(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_number_integer())
    throw ConfigError("config: " + path + key + ": expected an integer");
  out = j.get<T>();
}

void assign_double(const json& obj, const std::string& path, const char* key, double& out) {
  if (!obj.contains(key)) return;
  out = as_number(obj.at(key), path + key);
}

void assign_bool(const json& obj, const std::string& path, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_boolean()) throw ConfigError("config: " + path + key + ": expected a boolean");
  out = j.get<bool>();
}

void assign_string(const json& obj, const std::string& path, const char* key,
                   std::string& out) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_string()) throw ConfigError("config: " + path + key + ": expected a string");
  out = j.get<std::string>();
}

void assign_double_list(const json& obj, const std::string& path, const char* key,
                        std::vector<double>& out) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_array()) throw ConfigError("config: " + path + key + ": expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(as_number(j[i], path + key + "[" + std::to_string(i) + "]"));
}

void assign_string_list(const json& obj, const std::string& path, const char* key,
                        std::vector<std::string>& out) {
  if (!obj.contains(key)) return;
  const json& j = obj.at(key);
  if (!j.is_array()) throw ConfigError("config: " + path + key + ": expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string())
      throw ConfigError("config: " + path + key + "[" + std::to_string(i) +
                        "]: expected a string");
    out.push_back(j[i].get<std::string>());
  }
}

const std::set<std::string> kOptimalMethods = {"lmmse", "lav", "quad", "tikh-weighted"};
const std::set<std::string> kLearnedMethods = {"aff", "lav", "quad", "tikh"};

// ---------------------------------------------------------------------------
// experiment pieces

struct Instance {
  std::string suffix;  // "", or "-eta0.1"
  std::optional<double> eta;
};

std::vector<Instance> instances(const ExperimentConfig& cfg) {
  std::vector<Instance> out;
  const std::vector<double>* etas = nullptr;
  if (cfg.experiment == "dereverb")
    etas = &cfg.dereverb.eta_levels;
  else if (cfg.experiment == "custom" && cfg.custom.noise == "wind")
    etas = &cfg.custom.eta_levels;
  if (etas == nullptr) {
    out.push_back({"", std::nullopt});
  } else {
    for (double eta : *etas) out.push_back({"-eta" + eta_tag(eta), eta});
  }
  return out;
}

datagen::ConvolutionOperator make_operator(const ExperimentConfig& cfg) {
  if (cfg.experiment == "deconv")
    return datagen::ConvolutionOperator(datagen::hat_kernel(cfg.deconv.hat_halfwidth),
                                        cfg.deconv.n);
  if (cfg.experiment == "dereverb")
    return datagen::ConvolutionOperator(datagen::reverb_kernel(cfg.dereverb.n),
                                        cfg.dereverb.n);
  if (cfg.custom.kernel == "hat")
    return datagen::ConvolutionOperator(datagen::hat_kernel(cfg.custom.hat_halfwidth),
                                        cfg.custom.n);
  return datagen::ConvolutionOperator(datagen::reverb_kernel(cfg.custom.n), cfg.custom.n);
}

Matrix wav_frames(const std::string& directory, Index needed, Index frame_len = 1000,
                  Index downsample = 2) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(directory))
    throw DataError("wav source: " + directory + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(directory))
    if (entry.path().extension() == ".wav") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Matrix> chunks;
  Index total = 0;
  for (const auto& f : files) {
    if (total >= needed) break;
    chunks.push_back(datagen::ingest_wav(f, frame_len, downsample));
    total += chunks.back().rows();
  }
  if (total < needed)
    throw DataError("wav source: needed " + std::to_string(needed) + " frames, found " +
                    std::to_string(total) + " in " + directory);
  Matrix out(needed, chunks.front().cols());
  Index at = 0;
  for (const Matrix& c : chunks) {
    const Index take = std::min(c.rows(), needed - at);
    if (take <= 0) break;
    out.middleRows(at, take) = c.topRows(take);
    at += take;
  }
  return out;
}

Matrix make_signals(const ExperimentConfig& cfg, Index count, std::uint64_t seed,
                    Index wav_skip) {
  if (cfg.experiment == "deconv")
    return datagen::gen_plateau_signals(count, cfg.deconv.n, seed);
  if (cfg.experiment == "dereverb") {
    if (cfg.dereverb.signal_source == "synthetic")
      return datagen::gen_speech_like_signals(count, cfg.dereverb.n, seed);
    const std::string dir = cfg.dereverb.signal_source.substr(4);
    return wav_frames(dir, wav_skip + count).bottomRows(count);
  }
  if (cfg.custom.signal == "plateau")
    return datagen::gen_plateau_signals(count, cfg.custom.n, seed);
  return datagen::gen_speech_like_signals(count, cfg.custom.n, seed);
}

datagen::NoiseModel make_noise(const ExperimentConfig& cfg) {
  if (cfg.experiment == "deconv")
    return datagen::DiagonalLinearDecay{cfg.deconv.sigma_first, cfg.deconv.sigma_last};
  if (cfg.experiment == "dereverb")
    return datagen::WindNoise{cfg.dereverb.cutoff_hz, cfg.dereverb.rate_hz};
  if (cfg.custom.noise == "white") return datagen::WhiteGaussian{cfg.custom.white_sigma};
  if (cfg.custom.noise == "diag-linear-decay")
    return datagen::DiagonalLinearDecay{cfg.custom.sigma_first, cfg.custom.sigma_last};
  return datagen::WindNoise{};
}

std::string generator_id(const ExperimentConfig& cfg) {
  if (cfg.experiment == "deconv") return "plateau+decay";
  if (cfg.experiment == "dereverb")
    return cfg.dereverb.signal_source == "synthetic" ? "speech+wind" : "wav+wind";
  return cfg.custom.signal + "+" + cfg.custom.noise;
}

/// Table convention per experiment: the deconvolution table reports plain
/// squared-norm means, the dereverberation grids the per-dimension objective.
std::string convention(const ExperimentConfig& cfg) {
  return cfg.experiment == "dereverb" ? "per-dimension" : "sum";
}

std::filesystem::path dataset_path(const ExperimentConfig& cfg, const Instance& inst,
                                   bool train_split) {
  return std::filesystem::path(cfg.output_dir) /
         ((train_split ? "train" : "test") + inst.suffix + ".ds");
}

std::uint64_t noise_seed(const ExperimentConfig& cfg, std::size_t instance_index,
                         bool train_split) {
  return cfg.seed + (train_split ? 1000 : 2000) + instance_index;
}

PairedDataset load_split(const ExperimentConfig& cfg, const Instance& inst,
                         bool train_split) {
  const auto path = dataset_path(cfg, inst, train_split);
  if (!std::filesystem::exists(path))
    throw DataError("dataset " + path.string() + " not found; run `regopt generate` first");
  return io::read_dataset(path);
}

// ---------------------------------------------------------------------------
// result rows

json risk_to_json(const EmpiricalRisk& r) {
  return json{{"mean_sum_sq", r.mean_sum_sq},
              {"mean_per_dim", r.mean_per_dim},
              {"std_error_sum_sq", r.std_error_sum_sq},
              {"count", r.count}};
}

struct RowKey {
  std::string method, kind;
  std::optional<double> eta;
};

json make_row(const ExperimentConfig& cfg, const RowKey& key,
              const std::optional<EmpiricalRisk>& train_risk,
              const std::optional<EmpiricalRisk>& test_risk, double wall_s,
              const json& diagnostics, const std::string& failure) {
  json row;
  row["method"] = key.method;
  row["kind"] = key.kind;
  row["eta"] = key.eta.has_value() ? json(*key.eta) : json(nullptr);
  row["train_risk"] = train_risk ? risk_to_json(*train_risk) : json(nullptr);
  row["test_risk"] = test_risk ? risk_to_json(*test_risk) : json(nullptr);
  row["convention"] = convention(cfg);
  row["wall_time_s"] = wall_s;
  row["seed"] = cfg.seed;
  row["config_hash"] = config_hash(cfg);
  row["diagnostics"] = diagnostics;
  row["failure"] = failure.empty() ? json(nullptr) : json(failure);
  return row;
}

void merge_rows(const ExperimentConfig& cfg, const std::vector<json>& new_rows) {
  const auto path = std::filesystem::path(cfg.output_dir) / "results.json";
  json doc;
  doc["experiment"] = cfg.experiment;
  doc["config_hash"] = config_hash(cfg);
  doc["rows"] = json::array();
  if (std::filesystem::exists(path)) {
    std::ifstream is(path);
    json old;
    is >> old;
    if (old.contains("rows")) doc["rows"] = old["rows"];
  }
  auto same_key = [](const json& a, const json& b) {
    return a["method"] == b["method"] && a["kind"] == b["kind"] && a["eta"] == b["eta"];
  };
  for (const json& row : new_rows) {
    auto& rows = doc["rows"];
    rows.erase(std::remove_if(rows.begin(), rows.end(),
                              [&](const json& r) { return same_key(r, row); }),
               rows.end());
    rows.push_back(row);
  }
  write_text_atomic(path, doc.dump(2) + "\n");
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.methods.optimal = {"lmmse", "lav", "quad"};
  cfg.train.seed = 7;
  if (name == "deconv") {
    cfg.experiment = "deconv";
    cfg.train_size = 50000;
    cfg.test_size = 20000;
    cfg.output_dir = "out/deconv";
  } else if (name == "deconv-small") {
    cfg.experiment = "deconv";
    cfg.train_size = 5000;
    cfg.test_size = 2000;
    cfg.output_dir = "out/deconv-small";
  } else if (name == "dereverb") {
    cfg.experiment = "dereverb";
    cfg.train_size = 21147;
    cfg.test_size = 4601;
    cfg.output_dir = "out/dereverb";
    cfg.methods.learned = {"aff", "lav", "quad", "tikh"};
    cfg.train.epochs = 200;
  } else if (name == "dereverb-small") {
    cfg.experiment = "dereverb";
    cfg.train_size = 2000;
    cfg.test_size = 500;
    cfg.output_dir = "out/dereverb-small";
    cfg.dereverb.eta_levels = {0.1, 0.3, 0.5};
    cfg.methods.learned = {"aff", "lav", "quad", "tikh"};
    cfg.train.epochs = 20;
  } else {
    throw ConfigError("unknown preset '" + name +
                      "' (expected deconv, deconv-small, dereverb, dereverb-small)");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_known_keys(j, "", {"experiment", "train_size", "test_size", "seed", "output_dir",
                           "jitter_rel", "deterministic", "methods", "deconv", "dereverb",
                           "custom", "train"});
  ExperimentConfig cfg;
  cfg.methods.optimal = {"lmmse", "lav", "quad"};
  assign_string(j, "", "experiment", cfg.experiment);
  if (cfg.experiment == "dereverb" && !j.contains("methods"))
    cfg.methods.learned = {"aff", "lav", "quad", "tikh"};
  assign_int(j, "", "train_size", cfg.train_size);
  assign_int(j, "", "test_size", cfg.test_size);
  assign_int(j, "", "seed", cfg.seed);
  assign_string(j, "", "output_dir", cfg.output_dir);
  assign_double(j, "", "jitter_rel", cfg.jitter_rel);
  assign_bool(j, "", "deterministic", cfg.deterministic);
  if (j.contains("methods")) {
    const json& m = j.at("methods");
    if (!m.is_object()) throw ConfigError("config: methods: expected an object");
    check_known_keys(m, "methods.", {"optimal", "learned"});
    assign_string_list(m, "methods.", "optimal", cfg.methods.optimal);
    assign_string_list(m, "methods.", "learned", cfg.methods.learned);
  }
  if (j.contains("deconv")) {
    const json& d = j.at("deconv");
    if (!d.is_object()) throw ConfigError("config: deconv: expected an object");
    check_known_keys(d, "deconv.", {"n", "hat_halfwidth", "sigma_first", "sigma_last"});
    assign_int(d, "deconv.", "n", cfg.deconv.n);
    assign_int(d, "deconv.", "hat_halfwidth", cfg.deconv.hat_halfwidth);
    assign_double(d, "deconv.", "sigma_first", cfg.deconv.sigma_first);
    assign_double(d, "deconv.", "sigma_last", cfg.deconv.sigma_last);
  }
  if (j.contains("dereverb")) {
    const json& d = j.at("dereverb");
    if (!d.is_object()) throw ConfigError("config: dereverb: expected an object");
    check_known_keys(d, "dereverb.",
                     {"n", "eta_levels", "cutoff_hz", "rate_hz", "signal_source"});
    assign_int(d, "dereverb.", "n", cfg.dereverb.n);
    assign_double_list(d, "dereverb.", "eta_levels", cfg.dereverb.eta_levels);
    assign_double(d, "dereverb.", "cutoff_hz", cfg.dereverb.cutoff_hz);
    assign_double(d, "dereverb.", "rate_hz", cfg.dereverb.rate_hz);
    assign_string(d, "dereverb.", "signal_source", cfg.dereverb.signal_source);
  }
  if (j.contains("custom")) {
    const json& c = j.at("custom");
    if (!c.is_object()) throw ConfigError("config: custom: expected an object");
    check_known_keys(c, "custom.",
                     {"n", "kernel", "hat_halfwidth", "signal", "noise", "white_sigma",
                      "sigma_first", "sigma_last", "eta_levels", "known_noise_cov"});
    assign_int(c, "custom.", "n", cfg.custom.n);
    assign_string(c, "custom.", "kernel", cfg.custom.kernel);
    assign_int(c, "custom.", "hat_halfwidth", cfg.custom.hat_halfwidth);
    assign_string(c, "custom.", "signal", cfg.custom.signal);
    assign_string(c, "custom.", "noise", cfg.custom.noise);
    assign_double(c, "custom.", "white_sigma", cfg.custom.white_sigma);
    assign_double(c, "custom.", "sigma_first", cfg.custom.sigma_first);
    assign_double(c, "custom.", "sigma_last", cfg.custom.sigma_last);
    assign_double_list(c, "custom.", "eta_levels", cfg.custom.eta_levels);
    assign_bool(c, "custom.", "known_noise_cov", cfg.custom.known_noise_cov);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (!t.is_object()) throw ConfigError("config: train: expected an object");
    check_known_keys(t, "train.",
                     {"initial_lr", "batch_size", "epochs", "seed", "adam_beta1",
                      "adam_beta2", "adam_eps", "per_dimension_loss", "divergence_factor"});
    assign_double(t, "train.", "initial_lr", cfg.train.initial_lr);
    assign_int(t, "train.", "batch_size", cfg.train.batch_size);
    assign_int(t, "train.", "epochs", cfg.train.epochs);
    assign_int(t, "train.", "seed", cfg.train.seed);
    assign_double(t, "train.", "adam_beta1", cfg.train.adam_beta1);
    assign_double(t, "train.", "adam_beta2", cfg.train.adam_beta2);
    assign_double(t, "train.", "adam_eps", cfg.train.adam_eps);
    assign_bool(t, "train.", "per_dimension_loss", cfg.train.per_dimension_loss);
    assign_double(t, "train.", "divergence_factor", cfg.train.divergence_factor);
  }
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.experiment != "deconv" && cfg.experiment != "dereverb" &&
      cfg.experiment != "custom")
    throw ConfigError("config: experiment: expected deconv, dereverb or custom, got '" +
                      cfg.experiment + "'");
  if (cfg.train_size < 2) throw ConfigError("config: train_size: must be >= 2");
  if (cfg.test_size < 1) throw ConfigError("config: test_size: must be >= 1");
  if (!(cfg.jitter_rel > 0)) throw ConfigError("config: jitter_rel: must be positive");
  for (std::size_t i = 0; i < cfg.methods.optimal.size(); ++i)
    if (!kOptimalMethods.count(cfg.methods.optimal[i]))
      throw ConfigError("config: methods.optimal[" + std::to_string(i) +
                        "]: unknown method '" + cfg.methods.optimal[i] + "'");
  for (std::size_t i = 0; i < cfg.methods.learned.size(); ++i)
    if (!kLearnedMethods.count(cfg.methods.learned[i]))
      throw ConfigError("config: methods.learned[" + std::to_string(i) +
                        "]: unknown method '" + cfg.methods.learned[i] + "'");
  if (cfg.deconv.n < 2) throw ConfigError("config: deconv.n: must be >= 2");
  if (cfg.deconv.hat_halfwidth < 1)
    throw ConfigError("config: deconv.hat_halfwidth: must be >= 1");
  if (cfg.dereverb.n < 500) throw ConfigError("config: dereverb.n: must be >= 500");
  if (cfg.dereverb.eta_levels.empty())
    throw ConfigError("config: dereverb.eta_levels: must not be empty");
  for (std::size_t i = 0; i < cfg.dereverb.eta_levels.size(); ++i)
    if (!(cfg.dereverb.eta_levels[i] > 0))
      throw ConfigError("config: dereverb.eta_levels[" + std::to_string(i) +
                        "]: must be positive");
  if (cfg.dereverb.signal_source != "synthetic" &&
      cfg.dereverb.signal_source.rfind("wav:", 0) != 0)
    throw ConfigError("config: dereverb.signal_source: expected 'synthetic' or 'wav:<dir>'");
  if (cfg.custom.kernel != "hat" && cfg.custom.kernel != "reverb")
    throw ConfigError("config: custom.kernel: expected hat or reverb");
  if (cfg.custom.signal != "plateau" && cfg.custom.signal != "speech")
    throw ConfigError("config: custom.signal: expected plateau or speech");
  if (cfg.custom.noise != "white" && cfg.custom.noise != "diag-linear-decay" &&
      cfg.custom.noise != "wind")
    throw ConfigError("config: custom.noise: expected white, diag-linear-decay or wind");
  if (cfg.custom.known_noise_cov && cfg.custom.noise == "wind")
    throw ConfigError("config: custom.known_noise_cov: wind noise has no analytic covariance");
  if (cfg.train.epochs < 1) throw ConfigError("config: train.epochs: must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("config: train.batch_size: must be >= 1");
  if (static_cast<Index>(cfg.train.batch_size) > cfg.train_size)
    throw ConfigError("config: train.batch_size: must not exceed train_size");
  if (!(cfg.train.initial_lr > 0))
    throw ConfigError("config: train.initial_lr: must be positive");
  for (auto [beta, name] : {std::pair{cfg.train.adam_beta1, "train.adam_beta1"},
                            std::pair{cfg.train.adam_beta2, "train.adam_beta2"}})
    if (!(beta > 0 && beta < 1))
      throw ConfigError(std::string("config: ") + name + ": must lie in (0, 1)");
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["train_size"] = cfg.train_size;
  j["test_size"] = cfg.test_size;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["jitter_rel"] = cfg.jitter_rel;
  j["deterministic"] = cfg.deterministic;
  j["methods"] = {{"optimal", cfg.methods.optimal}, {"learned", cfg.methods.learned}};
  j["deconv"] = {{"n", cfg.deconv.n},
                 {"hat_halfwidth", cfg.deconv.hat_halfwidth},
                 {"sigma_first", cfg.deconv.sigma_first},
                 {"sigma_last", cfg.deconv.sigma_last}};
  j["dereverb"] = {{"n", cfg.dereverb.n},
                   {"eta_levels", cfg.dereverb.eta_levels},
                   {"cutoff_hz", cfg.dereverb.cutoff_hz},
                   {"rate_hz", cfg.dereverb.rate_hz},
                   {"signal_source", cfg.dereverb.signal_source}};
  j["custom"] = {{"n", cfg.custom.n},
                 {"kernel", cfg.custom.kernel},
                 {"hat_halfwidth", cfg.custom.hat_halfwidth},
                 {"signal", cfg.custom.signal},
                 {"noise", cfg.custom.noise},
                 {"white_sigma", cfg.custom.white_sigma},
                 {"sigma_first", cfg.custom.sigma_first},
                 {"sigma_last", cfg.custom.sigma_last},
                 {"eta_levels", cfg.custom.eta_levels},
                 {"known_noise_cov", cfg.custom.known_noise_cov}};
  j["train"] = {{"initial_lr", cfg.train.initial_lr},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"seed", cfg.train.seed},
                {"adam_beta1", cfg.train.adam_beta1},
                {"adam_beta2", cfg.train.adam_beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"per_dimension_loss", cfg.train.per_dimension_loss},
                {"divergence_factor", cfg.train.divergence_factor}};
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void run_generate(const ExperimentConfig& cfg) {
  validate(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  write_text_atomic(std::filesystem::path(cfg.output_dir) / "config.json",
                    config_to_json(cfg));
  const datagen::ConvolutionOperator op = make_operator(cfg);
  const Matrix train_signals = make_signals(cfg, cfg.train_size, cfg.seed, 0);
  const Matrix test_signals = make_signals(cfg, cfg.test_size, cfg.seed + 1, cfg.train_size);
  const datagen::NoiseModel noise = make_noise(cfg);
  const std::string gen = generator_id(cfg);
  const auto insts = instances(cfg);
  for (std::size_t k = 0; k < insts.size(); ++k) {
    const double eta = insts[k].eta.value_or(1.0);
    io::write_dataset(dataset_path(cfg, insts[k], true),
                      datagen::make_dataset(train_signals, op, noise, eta,
                                            noise_seed(cfg, k, true), gen));
    io::write_dataset(dataset_path(cfg, insts[k], false),
                      datagen::make_dataset(test_signals, op, noise, eta,
                                            noise_seed(cfg, k, false), gen));
  }
}

namespace {

struct FittedMoments {
  ProblemMoments moments;
  double residual_mean_norm;
};

FittedMoments build_moments(const ExperimentConfig& cfg,
                            const datagen::ConvolutionOperator& op,
                            const PairedDataset& train_ds) {
  const MomentEstimate sig = empirical_moments(train_ds.x);
  // The ridge keeps the empirical covariances invertible for the Σ⁻¹ formulas.
  const SymmetricMatrix sigma_x = jitter_regularize(sig.covariance, cfg.jitter_rel);
  if (cfg.experiment == "custom" && cfg.custom.known_noise_cov) {
    const Index m = op.m();
    const SymmetricMatrix sigma_eps =
        cfg.custom.noise == "white"
            ? SymmetricMatrix(Matrix(cfg.custom.white_sigma * cfg.custom.white_sigma *
                                     Matrix::Identity(m, m)))
            : datagen::linear_decay_noise_cov(m, cfg.custom.sigma_first,
                                              cfg.custom.sigma_last);
    return {ProblemMoments(op.matrix(), sig.mean, sigma_x, sigma_eps), 0.0};
  }
  const NoiseMomentEstimate noise = noise_moments_from_pairs(train_ds, op.matrix());
  const SymmetricMatrix sigma_eps = jitter_regularize(noise.covariance, cfg.jitter_rel);
  return {ProblemMoments(op.matrix(), sig.mean, sigma_x, sigma_eps),
          noise.residual_mean.norm()};
}

}  // namespace

void run_fit_optimal(const ExperimentConfig& cfg) {
  validate(cfg);
  const datagen::ConvolutionOperator op = make_operator(cfg);
  std::vector<json> rows;
  const std::vector<Instance> insts = instances(cfg);
  for (std::size_t k = 0; k < insts.size(); ++k) {
    const Instance& inst = insts[k];
    const PairedDataset train_ds = load_split(cfg, inst, true);
    const PairedDataset test_ds = load_split(cfg, inst, false);
    Stopwatch moments_watch;
    const FittedMoments fitted = build_moments(cfg, op, train_ds);
    const double moments_s = moments_watch.seconds();
    const GapCondition gap =
        lavrentiev_gap_condition(op.matrix(), fitted.moments.sigma_eps);

    for (const std::string& method : cfg.methods.optimal) {
      Stopwatch watch;
      json diag;
      diag["residual_mean_norm"] = fitted.residual_mean_norm;
      diag["jitter_rel"] = cfg.jitter_rel;
      RowKey key{method, "optimal", inst.eta};
      try {
        AffineMap map = [&]() -> AffineMap {
          if (method == "lmmse") {
            diag["gap_residual"] = gap.residual;
            diag["gap_holds"] = gap.holds;
            return lmmse(fitted.moments);
          }
          if (method == "lav") {
            LavParams params = optimal_lavrentiev(fitted.moments);
            diag["asymmetry_fraction"] = asymmetry_fraction(params.m);
            diag["gap_residual"] = gap.residual;
            diag["gap_holds"] = gap.holds;
            return assemble_map(RegularizerParams(params), op.matrix());
          }
          if (method == "quad") {
            QuadSolution sol = optimal_quadratic(fitted.moments);
            diag["min_eigenvalue_m"] = sol.min_eigenvalue_m;
            return assemble_map(RegularizerParams(sol.params), op.matrix());
          }
          TikhWeightedParams params = optimal_tikhonov_weighted(fitted.moments);
          return assemble_map(RegularizerParams(params), op.matrix());
        }();
        io::write_affine_map(std::filesystem::path(cfg.output_dir) /
                                 ("map-" + method + inst.suffix + ".am"),
                             map);
        const EmpiricalRisk train_risk = risk_empirical(train_ds, map);
        const EmpiricalRisk test_risk = risk_empirical(test_ds, map);
        rows.push_back(make_row(cfg, key, train_risk, test_risk,
                                watch.seconds() + moments_s, diag, ""));
      } catch (const Error& e) {
        rows.push_back(make_row(cfg, key, std::nullopt, std::nullopt, watch.seconds(),
                                diag, e.what()));
      }
    }
  }
  merge_rows(cfg, rows);
}

namespace {

void write_trace_files(const ExperimentConfig& cfg, const std::string& suffix,
                       const char* variant, const train::TrainResult& res) {
  const auto dir = std::filesystem::path(cfg.output_dir);
  std::ostringstream trace;
  trace << "step,minibatch_loss,smoothed_loss\n";
  const std::vector<double> smooth = res.trace.smoothed();
  for (std::size_t i = 0; i < res.trace.step_losses.size(); ++i)
    trace << i << ',' << shortest(res.trace.step_losses[i]) << ','
          << shortest(smooth[i]) << '\n';
  write_text_atomic(dir / ("trace-" + std::string(variant) + suffix + ".csv"),
                    trace.str());
  std::ostringstream epochs;
  epochs << "epoch,train_loss\n";
  for (std::size_t i = 0; i < res.trace.epoch_losses.size(); ++i)
    epochs << i << ',' << shortest(res.trace.epoch_losses[i]) << '\n';
  write_text_atomic(dir / ("epochs-" + std::string(variant) + suffix + ".csv"),
                    epochs.str());
}

}  // namespace

void run_train(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.methods.learned.empty())
    throw ConfigError("config: methods.learned: empty; nothing to train");
  const datagen::ConvolutionOperator op = make_operator(cfg);
  train::TrainConfig tcfg = cfg.train;
  tcfg.deterministic = tcfg.deterministic && cfg.deterministic;
  std::vector<json> rows;
  std::string divergence_failure;
  const std::vector<Instance> insts = instances(cfg);
  for (std::size_t k = 0; k < insts.size(); ++k) {
    const Instance& inst = insts[k];
    const PairedDataset train_ds = load_split(cfg, inst, true);
    const PairedDataset test_ds = load_split(cfg, inst, false);
    Stopwatch chain_watch;
    const train::ChainResult chain = train::warm_start_chain(train_ds, op.matrix(), tcfg);
    const double chain_s = chain_watch.seconds();

    const std::pair<const char*, const train::TrainResult*> parts[] = {
        {"tikh", &chain.tikh}, {"quad", &chain.quad}, {"lav", &chain.lav},
        {"aff", &chain.aff}};
    for (const auto& [variant, res] : parts) {
      write_trace_files(cfg, inst.suffix, variant, *res);
      train::save_checkpoint(std::filesystem::path(cfg.output_dir) /
                                 ("checkpoint-" + std::string(variant) + inst.suffix +
                                  ".ckpt"),
                             train::Checkpoint{res->params, res->state});
      const bool requested =
          std::find(cfg.methods.learned.begin(), cfg.methods.learned.end(), variant) !=
          cfg.methods.learned.end();
      RowKey key{variant, "learned", inst.eta};
      json diag;
      diag["offset_convention"] = "additive-c";
      diag["final_train_loss"] = res->trace.epoch_losses.back();
      diag["smoothing_window"] = res->trace.smoothing_window;
      diag["ridge_events"] = res->trace.ridge_events.size();
      if (res->diverged) {
        diag["diverged_step"] = res->diverged_step;
        divergence_failure = "training diverged for " + std::string(variant) +
                             inst.suffix + " at step " +
                             std::to_string(res->diverged_step) +
                             " (trace files written)";
        rows.push_back(make_row(cfg, key, std::nullopt, std::nullopt, chain_s, diag,
                                divergence_failure));
        continue;
      }
      if (res->params.variant != train::Variant::aff) {
        // Table-1 offset form x₀ = M⁻¹c, reported when the penalty is invertible.
        try {
          Matrix penalty;
          if (res->params.variant == train::Variant::lav)
            penalty = res->params.mat;
          else if (res->params.variant == train::Variant::quad)
            penalty = 0.5 * (res->params.mat + res->params.mat.transpose());
          else
            penalty = res->params.mat.transpose() * res->params.mat;
          diag["table1_x0_norm"] = solve_general(penalty, res->params.vec).norm();
        } catch (const NumericError&) {
          diag["table1_x0_norm"] = nullptr;
        }
      }
      if (!requested) continue;
      const AffineMap map = train::effective_map(res->params, op.matrix());
      const EmpiricalRisk train_risk = risk_empirical(train_ds, map);
      const EmpiricalRisk test_risk = risk_empirical(test_ds, map);
      rows.push_back(make_row(cfg, key, train_risk, test_risk, chain_s, diag, ""));
    }
  }
  merge_rows(cfg, rows);
  if (!divergence_failure.empty()) throw NumericError(divergence_failure);
}

void run_report(const std::filesystem::path& output_dir) {
  std::vector<std::string> missing;
  const auto results_path = output_dir / "results.json";
  if (!std::filesystem::exists(results_path)) missing.push_back(results_path.string());
  if (!missing.empty()) {
    std::string msg = "report: missing inputs:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw DataError(msg);
  }
  json doc;
  {
    std::ifstream is(results_path);
    try {
      is >> doc;
    } catch (const json::parse_error& e) {
      throw DataError("report: " + results_path.string() + ": " + e.what());
    }
  }
  const auto& rows = doc["rows"];
  if (!rows.is_array() || rows.empty())
    throw DataError("report: " + results_path.string() +
                    " contains no result rows; run fit-optimal or train first");
  const std::string experiment = doc.value("experiment", std::string("custom"));
  const auto report_dir = output_dir / "report";
  std::filesystem::create_directories(report_dir);

  // Single-convention enforcement per table.
  const std::string expected_convention =
      experiment == "dereverb" ? "per-dimension" : "sum";
  for (const json& row : rows)
    if (row.value("convention", "") != expected_convention)
      throw DataError("report: result rows mix normalization conventions ('" +
                      row.value("convention", std::string()) + "' vs '" +
                      expected_convention + "')");

  auto risk_of = [&](const json& row, const char* split) -> std::optional<double> {
    if (!row.contains(split) || row[split].is_null()) return std::nullopt;
    return expected_convention == "per-dimension"
               ? row[split]["mean_per_dim"].get<double>()
               : row[split]["mean_sum_sq"].get<double>();
  };

  const std::vector<std::pair<std::string, std::string>> order = {
      {"optimal", "lmmse"}, {"optimal", "lav"},  {"optimal", "quad"},
      {"optimal", "tikh-weighted"}, {"learned", "aff"}, {"learned", "lav"},
      {"learned", "quad"}, {"learned", "tikh"}};
  auto display_name = [](const std::string& kind, const std::string& method) {
    std::string m = method == "lmmse" ? "Aff" : method;
    if (!m.empty()) m[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(m[0])));
    return (kind == "optimal" ? "Optimal " : "Learned ") + m;
  };

  std::ostringstream failures;
  failures << "kind,method,eta,failure\n";
  bool any_failure = false;
  for (const json& row : rows)
    if (!row["failure"].is_null()) {
      any_failure = true;
      failures << row["kind"].get<std::string>() << ','
               << row["method"].get<std::string>() << ','
               << (row["eta"].is_null() ? "" : shortest(row["eta"].get<double>())) << ','
               << '"' << row["failure"].get<std::string>() << '"' << '\n';
    }
  if (any_failure) write_text_atomic(report_dir / "failures.csv", failures.str());

  if (experiment == "dereverb") {
    // η-grid tables, one per split.
    std::set<double> eta_set;
    for (const json& row : rows)
      if (!row["eta"].is_null()) eta_set.insert(row["eta"].get<double>());
    const std::vector<double> etas(eta_set.begin(), eta_set.end());
    for (const char* split : {"train_risk", "test_risk"}) {
      std::ostringstream os;
      os << "method";
      for (double eta : etas) os << ",eta" << eta_tag(eta);
      for (double eta : etas) os << ",eta" << eta_tag(eta) << "_disp";
      os << '\n';
      for (const auto& [kind, method] : order) {
        std::vector<std::optional<double>> vals;
        bool present = false;
        for (double eta : etas) {
          std::optional<double> v;
          for (const json& row : rows)
            if (row["kind"] == kind && row["method"] == method && !row["eta"].is_null() &&
                row["eta"].get<double>() == eta)
              v = risk_of(row, split);
          vals.push_back(v);
          present = present || v.has_value();
        }
        if (!present) continue;
        os << display_name(kind, method);
        for (const auto& v : vals) os << ',' << (v ? shortest(*v) : "");
        for (const auto& v : vals) os << ',' << (v ? display3(*v) : "");
        os << '\n';
      }
      write_text_atomic(report_dir /
                            (std::string("table_mse_") +
                             (std::string(split) == "train_risk" ? "train" : "test") +
                             ".csv"),
                        os.str());
    }
  } else {
    // Single-column loss table (test split).
    std::ostringstream os;
    os << "method,test_risk,test_risk_disp\n";
    for (const auto& [kind, method] : order) {
      for (const json& row : rows) {
        if (row["kind"] != kind || row["method"] != method) continue;
        const auto v = risk_of(row, "test_risk");
        if (!v) continue;
        std::string label = display_name(kind, method);
        if (!row["eta"].is_null())
          label += " (eta=" + eta_tag(row["eta"].get<double>()) + ")";
        os << label << ',' << shortest(*v) << ',' << display3(*v) << '\n';
      }
    }
    write_text_atomic(report_dir / "table_losses.csv", os.str());
  }

  // Plot data: smoothed loss curves from the trace files, mean signal for deconv.
  for (const auto& entry : std::filesystem::directory_iterator(output_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("trace-", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream is(entry.path());
    std::string line;
    std::getline(is, line);  // header
    std::ostringstream os;
    os << "step,smoothed_loss\n";
    while (std::getline(is, line)) {
      const auto first = line.find(',');
      const auto last = line.rfind(',');
      if (first == std::string::npos || last <= first) continue;
      os << line.substr(0, first) << ',' << line.substr(last + 1) << '\n';
    }
    write_text_atomic(report_dir / ("plot_loss_" + name.substr(6)), os.str());
  }
  if (experiment == "deconv") {
    const auto train_path = output_dir / "train.ds";
    if (!std::filesystem::exists(train_path))
      throw DataError("report: missing inputs:\n  " + train_path.string());
    const PairedDataset ds = io::read_dataset(train_path);
    const Vector mean = ds.x.colwise().mean().transpose();
    std::ostringstream os;
    os << "t,mean\n";
    for (Index j = 0; j < mean.size(); ++j)
      os << shortest((static_cast<double>(j) + 0.5) / static_cast<double>(mean.size()))
         << ',' << shortest(mean(j)) << '\n';
    write_text_atomic(report_dir / "plot_mean_signal.csv", os.str());
  }
}

}  // namespace regopt::cli
