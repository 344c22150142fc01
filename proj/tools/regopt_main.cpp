#include "regopt/experiment.hpp"
#include "regopt/threads.hpp"
#include "regopt/types.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset_name;
  std::string out_dir;
  std::optional<std::int64_t> seed;
  std::optional<bool> deterministic;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Path to a JSON experiment config");
  cmd->add_option("--preset", opts.preset_name,
                  "Built-in preset: deconv, deconv-small, dereverb, dereverb-small");
  cmd->add_option("--out", opts.out_dir, "Output directory (overrides config)");
  cmd->add_option("--seed", opts.seed, "Seed (overrides config; also sets train.seed)");
  cmd->add_option("--deterministic", opts.deterministic,
                  "Force deterministic reductions (true/false)");
}

regopt::cli::ExperimentConfig resolve(const CommonOpts& opts) {
  if (!opts.config_path.empty() && !opts.preset_name.empty())
    throw regopt::ConfigError("pass either --config or --preset, not both");
  if (opts.config_path.empty() && opts.preset_name.empty())
    throw regopt::ConfigError("one of --config or --preset is required");
  regopt::cli::ExperimentConfig cfg = opts.config_path.empty()
                                          ? regopt::cli::preset(opts.preset_name)
                                          : regopt::cli::load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (opts.seed) {
    cfg.seed = static_cast<std::uint64_t>(*opts.seed);
    cfg.train.seed = cfg.seed;
  }
  if (opts.deterministic) {
    cfg.deterministic = *opts.deterministic;
    cfg.train.deterministic = *opts.deterministic;
  }
  regopt::cli::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regopt: optimal and learned regularizers for linear inverse problems"};
  app.require_subcommand(1);

  CommonOpts gen_opts, fit_opts, train_opts, report_opts;
  CLI::App* gen = app.add_subcommand("generate", "Generate train/test dataset files");
  add_common(gen, gen_opts);
  CLI::App* fit = app.add_subcommand(
      "fit-optimal", "Compute closed-form optimal maps and evaluate their risks");
  add_common(fit, fit_opts);
  CLI::App* tr = app.add_subcommand(
      "train", "Run the warm-start training chain over the learned methods");
  add_common(tr, train_opts);
  CLI::App* rep = app.add_subcommand("report", "Emit CSV tables and plot data");
  add_common(rep, report_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) regopt::cli::run_generate(resolve(gen_opts));
    if (fit->parsed()) regopt::cli::run_fit_optimal(resolve(fit_opts));
    if (tr->parsed()) regopt::cli::run_train(resolve(train_opts));
    if (rep->parsed()) {
      // report only needs the output directory; a bare --out is enough.
      std::string dir = report_opts.out_dir;
      if (dir.empty()) {
        const auto cfg = resolve(report_opts);
        dir = cfg.output_dir;
      }
      regopt::cli::run_report(dir);
    }
  } catch (const regopt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const regopt::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const regopt::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
