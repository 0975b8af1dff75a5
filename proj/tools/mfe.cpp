#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <mfe/app.hpp>

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "INI configuration file");
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory (overrides the config)");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

mfe::RunConfig resolve(const Options& o, const CLI::App* cmd) {
  mfe::RunConfig cfg = o.config.empty() ? mfe::RunConfig{} : mfe::load_config(o.config);
  if (const char* env = std::getenv("MFE_OUTPUT_DIR"); env != nullptr && *env != '\0') cfg.output_dir = env;
  if (cmd->count("--seed") > 0) cfg.master_seed = o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field particle approximation of the stochastic compressible Euler system"};
  app.set_version_flag("--version", std::string(MFE_VERSION));
  app.require_subcommand(1);

  Options opts;
  auto* coupled = app.add_subcommand("run-coupled", "one coupled particle/fluid run");
  auto* rate = app.add_subcommand("rate-study", "Monte Carlo convergence-rate study over N");
  auto* report = app.add_subcommand("kernel-report", "kernel hypothesis report and mollification sweep");
  auto* self = app.add_subcommand("self-test", "quick oracle checks");
  for (auto* cmd : {coupled, rate, report, self}) add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (self->parsed()) {
      bool ok = true;
      for (const auto& c : mfe::self_test()) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        ok = ok && c.pass;
      }
      return ok ? 0 : kRuntimeError;
    }
    const CLI::App* cmd = coupled->parsed() ? coupled : rate->parsed() ? rate : report;
    const mfe::RunConfig cfg = resolve(opts, cmd);
    if (coupled->parsed()) return mfe::run_coupled(cfg, opts.threads, std::cout);
    if (rate->parsed()) return mfe::run_rate_study(cfg, opts.threads, std::cout);
    return mfe::run_kernel_report(cfg, std::cout);
  } catch (const mfe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
