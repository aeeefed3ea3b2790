// evsim: batch driver for the eviction-set simulator.
//
//   evsim predict  [--preset P] [--out F]
//   evsim rates    [--config F] [--seed S] [--trials K] [--out F] [--json F]
//   evsim sweep    ...
//   evsim scaling  ...
//   evsim find-all ...
//
// Exit codes: 0 success, 1 configuration error, 2 experiment failure.

#include <fstream>
#include <iostream>
#include <optional>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "evsim/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<unsigned> trials;
  std::optional<unsigned> jobs;
  std::string preset;
  std::string out;
  std::string json;
  std::vector<uint64_t> n_values;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "YAML experiment config");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--trials", o.trials, "trials per N (or per set index)");
  cmd->add_option("--jobs", o.jobs, "worker threads (0 = all cores)");
  cmd->add_option("--preset", o.preset, "skylake-like | haswell-like");
  cmd->add_option("--out", o.out, "CSV output path (default stdout)");
  cmd->add_option("--json", o.json, "optional JSON mirror path");
  cmd->add_option("-n,--n-values", o.n_values, "candidate set sizes")->delimiter(',');
}

evsim::ExperimentSpec resolve(const Overrides& o) {
  evsim::ExperimentSpec spec = o.config.empty() ? evsim::ExperimentSpec{}
                                                : evsim::load_spec_file(o.config);
  if (o.seed) spec.seed = *o.seed;
  if (o.trials) spec.trials = *o.trials;
  if (o.jobs) spec.jobs = *o.jobs;
  if (!o.preset.empty()) spec.preset = o.preset;
  if (!o.out.empty()) spec.out_path = o.out;
  if (!o.json.empty()) spec.json_path = o.json;
  if (!o.n_values.empty()) spec.n_values = o.n_values;
  return spec;
}

template <typename Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream f(path);
  if (!f) throw evsim::ConfigError(fmt::format("cannot write '{}'", path));
  write(f);
}

void emit_json(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  emit(path, [&](std::ostream& os) { os << text << '\n'; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eviction-set finding simulator and experiment driver"};
  app.require_subcommand(1);
  Overrides o;
  auto* predict = app.add_subcommand("predict", "model curves and optimal set sizes");
  auto* rates = app.add_subcommand("rates", "eviction and reduction rates over N");
  auto* sweep = app.add_subcommand("sweep", "rates per targeted set index");
  auto* scaling = app.add_subcommand("scaling", "reduction cost growth and fitted exponents");
  auto* find_all = app.add_subcommand("find-all", "strip every congruence class from a pool");
  for (auto* cmd : {predict, rates, sweep, scaling, find_all}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    evsim::ExperimentSpec spec = resolve(o);
    if (predict->parsed()) {
      auto rep = evsim::run_model_report(spec);
      emit(spec.out_path, [&](std::ostream& os) { evsim::write_model_csv(os, spec, rep); });
      emit_json(spec.json_path, evsim::model_json(spec, rep));
    } else if (rates->parsed()) {
      auto pts = evsim::run_rate_experiment(spec);
      emit(spec.out_path, [&](std::ostream& os) { evsim::write_rates_csv(os, spec, pts); });
      emit_json(spec.json_path, evsim::rates_json(spec, pts));
    } else if (sweep->parsed()) {
      auto pts = evsim::run_per_set_sweep(spec);
      emit(spec.out_path, [&](std::ostream& os) { evsim::write_sweep_csv(os, spec, pts); });
      emit_json(spec.json_path, evsim::sweep_json(spec, pts));
    } else if (scaling->parsed()) {
      auto res = evsim::run_scaling_experiment(spec);
      emit(spec.out_path, [&](std::ostream& os) { evsim::write_scaling_csv(os, spec, res); });
      emit_json(spec.json_path, evsim::scaling_json(spec, res));
    } else if (find_all->parsed()) {
      auto rep = evsim::run_find_all(spec);
      emit(spec.out_path, [&](std::ostream& os) { evsim::write_find_all_csv(os, spec, rep); });
    }
  } catch (const evsim::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const evsim::ExperimentError& e) {
    std::cerr << "experiment failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "experiment failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
