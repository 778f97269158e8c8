#ifndef BADGE_CLI_HPP
#define BADGE_CLI_HPP

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "badge/data.hpp"
#include "badge/engine.hpp"
#include "badge/metrics.hpp"
#include "badge/serialize.hpp"
#include "badge/spectral.hpp"

// Command-line pipeline: simulate | fit | fit-spectral | eval | export.
// Exit codes: 0 success, 1 usage, 2 IO/parse, 3 numerical failure.

namespace badge {

namespace cli_detail {

struct FitFlags {
  std::string input;
  std::string out_dir;
  int anneal_iters = 500;
  int max_iters = 1000;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  double tol = 1e-6;
  bool no_anneal = false;
  bool no_standardize = false;
};

inline void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--input", f.input, "observations (CSV or badge-data-v1 JSON)")->required();
  cmd->add_option("--out", f.out_dir, "output directory")->required();
  cmd->add_option("--anneal-iters", f.anneal_iters, "annealing iterations N_a");
  cmd->add_option("--max-iters", f.max_iters, "total iteration cap");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--threshold", f.threshold, "edge inclusion threshold on <s>");
  cmd->add_option("--tol", f.tol, "relative ELBO convergence tolerance");
  cmd->add_flag("--no-anneal", f.no_anneal, "disable simulated annealing");
  cmd->add_flag("--no-standardize", f.no_standardize, "skip unit-variance standardization");
}

inline FitConfig make_config(const FitFlags& f) {
  FitConfig cfg;
  cfg.max_iters = f.max_iters;
  cfg.anneal_iters = f.no_anneal ? 0 : f.anneal_iters;
  cfg.elbo_rel_tol = f.tol;
  cfg.graph_threshold = f.threshold;
  cfg.rng_seed = f.seed;
  return cfg;
}

inline std::optional<AnnealDriver> make_driver(const FitFlags& f) {
  if (f.no_anneal || f.anneal_iters <= 0) return std::nullopt;
  return AnnealDriver(f.anneal_iters, f.seed);
}

template <class Scalar>
inline void write_trace_csv(const FitResult<Scalar>& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write " + path);
  out << "iteration,elbo,accepted,rate\n";
  char buf[64];
  for (std::size_t i = 0; i < r.elbo_trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.elbo_trace[i]);
    const double accepted = i == 0 ? 1.0 : r.accepted_trace[i - 1];
    const double rate = i == 0 ? 0.0 : r.rate_trace[i - 1];
    out << i << "," << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", accepted);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", rate);
    out << buf << "\n";
  }
}

inline std::pair<double, double> parse_band(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("--band", "expected lo:hi, got '" + spec + "'");
  try {
    return {std::stod(spec.substr(0, colon)), std::stod(spec.substr(colon + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--band", "expected numeric lo:hi, got '" + spec + "'");
  }
}

inline int run_simulate(const std::string& kind, int p, int n, int ne, std::uint64_t seed,
                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (kind == "var1") {
    auto [data, truth] = simulate_var1(p, n, ne, seed);
    save_observations_csv(data, out_dir + "/data.csv");
    write_json_file(truth_to_json(truth, var1_truth_graph(truth.a_matrix, n)),
                    out_dir + "/truth.json");
  } else {
    auto [data, truth] = simulate_time_varying(p, n, ne, seed);
    save_observations_csv(data, out_dir + "/data.csv");
    write_json_file(truth_to_json(truth, truth.support), out_dir + "/truth.json");
  }
  return 0;
}

inline int run_fit(const FitFlags& flags) {
  ObservationSet data = load_observations(flags.input);
  if (!flags.no_standardize) data = standardize(data, /*subtract_mean=*/true).first;
  const FitConfig cfg = make_config(flags);
  const FitResult<double> result = fit(data, cfg, make_driver(flags));
  std::filesystem::create_directories(flags.out_dir);
  write_json_file(fit_result_to_json(result), flags.out_dir + "/model.json");
  write_trace_csv(result, flags.out_dir + "/trace.csv");
  write_json_file(graph_to_json(extract_graphs(result.model, flags.threshold)),
                  flags.out_dir + "/graph.json");
  return 0;
}

inline int run_fit_spectral(const FitFlags& flags, double sample_rate,
                            const std::vector<std::string>& bands) {
  ObservationSet data = load_observations(flags.input);
  if (data.has_missing())
    throw parse_error("fit-spectral requires a complete series (no missing cells)");
  if (!flags.no_standardize) data = standardize(data, /*subtract_mean=*/false).first;
  const SpectralCoefficients coeffs = normalized_dft(data.values);
  const FitConfig cfg = make_config(flags);
  const FitResult<std::complex<double>> result = fit_spectral(coeffs, cfg, make_driver(flags));
  std::filesystem::create_directories(flags.out_dir);
  write_json_file(fit_result_to_json(result), flags.out_dir + "/model.json");
  write_trace_csv(result, flags.out_dir + "/trace.csv");
  write_json_file(graph_to_json(spectral_union_graph(result.model, flags.threshold)),
                  flags.out_dir + "/graph.json");
  for (const std::string& spec : bands) {
    const auto [lo, hi] = parse_band(spec);
    FrequencyBand band{lo, hi, sample_rate};
    nlohmann::json doc = graph_to_json(band_graph(result.model, band, flags.threshold));
    doc["band"] = {lo, hi};
    doc["sample_rate"] = sample_rate;
    char name[96];
    std::snprintf(name, sizeof(name), "/band_%g-%g.json", lo, hi);
    write_json_file(doc, flags.out_dir + name);
  }
  return 0;
}

inline int run_eval(const std::string& est_path, const std::string& truth_path, bool macro) {
  const GraphTrajectory est = graph_from_json(read_json_file(est_path));
  const GraphTrajectory truth = graph_from_json(read_json_file(truth_path));
  const MetricsReport report = structure_metrics(est, truth, macro);
  std::cout << metrics_to_json(report).dump(1) << "\n";
  return 0;
}

inline int run_export(const std::string& model_path, const std::string& what, double threshold,
                      const std::string& out_path) {
  const nlohmann::json doc = read_json_file(model_path);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw parse_error("cannot write " + out_path);
    out = &file;
  }

  const auto extract = [&](auto scalar_tag) {
    using S = decltype(scalar_tag);
    const VariationalModel<S> model = model_from_json<S>(doc);
    return extract_graphs(model, threshold);
  };
  const bool frequency = doc.value("domain", "time") == std::string("frequency");

  if (what == "edges" || what == "edge-counts") {
    const GraphTrajectory g = frequency ? extract(std::complex<double>{}) : extract(double{});
    if (what == "edges") {
      *out << "t,j,k\n";
      for (int t = 0; t < g.n; ++t)
        for (int j = 0; j < g.p; ++j)
          for (int k = j + 1; k < g.p; ++k)
            if (g.at(t, j, k)) *out << t << "," << j << "," << k << "\n";
    } else {
      *out << "t,count\n";
      for (int t = 0; t < g.n; ++t) *out << t << "," << g.edge_count(t) << "\n";
    }
    return 0;
  }
  if (what == "elbo") {
    if (!doc.contains("fit")) throw parse_error("model file carries no fit trace");
    const auto& fit = doc["fit"];
    const auto elbo = fit.at("elbo_trace").get<std::vector<double>>();
    const auto accepted = fit.value("accepted", std::vector<double>{});
    const auto rates = fit.value("rates", std::vector<double>{});
    *out << "iteration,elbo,accepted,rate\n";
    char buf[64];
    for (std::size_t i = 0; i < elbo.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", elbo[i]);
      const double acc = i == 0 ? 1.0 : (i - 1 < accepted.size() ? accepted[i - 1] : 1.0);
      const double rate = i == 0 ? 0.0 : (i - 1 < rates.size() ? rates[i - 1] : 1.0);
      *out << i << "," << buf << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", acc);
      *out << buf << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", rate);
      *out << buf << "\n";
    }
    return 0;
  }
  throw CLI::ValidationError("--what", "expected edges, elbo or edge-counts");
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"dynamic sparse Gaussian graphical model estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate benchmark data with ground truth");
  std::string sim_kind = "time";
  int sim_p = 20, sim_n = 1000, sim_ne = 20;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim->add_option("--kind", sim_kind, "time | var1")->check(CLI::IsMember({"time", "var1"}));
  sim->add_option("--p", sim_p, "number of variables")->required();
  sim->add_option("--n", sim_n, "number of samples")->required();
  sim->add_option("--ne", sim_ne, "average number of edges")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output directory")->required();

  // fit
  cli_detail::FitFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "fit the time-varying model");
  cli_detail::add_fit_flags(fit_cmd, fit_flags);

  // fit-spectral
  cli_detail::FitFlags spec_flags;
  double sample_rate = 1.0;
  std::vector<std::string> bands;
  auto* spec_cmd = app.add_subcommand("fit-spectral", "fit the frequency-varying model to a series");
  cli_detail::add_fit_flags(spec_cmd, spec_flags);
  spec_cmd->add_option("--sample-rate", sample_rate, "samples per second");
  spec_cmd->add_option("--band", bands, "band lo:hi in physical frequency units (repeatable)");

  // eval
  std::string est_path, truth_path;
  bool macro = false;
  auto* eval_cmd = app.add_subcommand("eval", "score an estimated graph against ground truth");
  eval_cmd->add_option("--est", est_path, "estimated graph JSON")->required();
  eval_cmd->add_option("--truth", truth_path, "ground-truth JSON")->required();
  eval_cmd->add_flag("--macro", macro, "average per-time scores instead of pooling");

  // export
  std::string model_path, what = "edges", export_out;
  double export_threshold = 0.5;
  auto* export_cmd = app.add_subcommand("export", "export CSV views of a fitted model");
  export_cmd->add_option("--model", model_path, "model JSON")->required();
  export_cmd->add_option("--what", what, "edges | elbo | edge-counts")->required();
  export_cmd->add_option("--threshold", export_threshold, "edge inclusion threshold");
  export_cmd->add_option("--out", export_out, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
    if (sim->parsed())
      return cli_detail::run_simulate(sim_kind, sim_p, sim_n, sim_ne, sim_seed, sim_out);
    if (fit_cmd->parsed()) return cli_detail::run_fit(fit_flags);
    if (spec_cmd->parsed()) return cli_detail::run_fit_spectral(spec_flags, sample_rate, bands);
    if (eval_cmd->parsed()) return cli_detail::run_eval(est_path, truth_path, macro);
    if (export_cmd->parsed())
      return cli_detail::run_export(model_path, what, export_threshold, export_out);
    std::cerr << app.help() << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const chains::not_positive_definite& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace badge

#endif  // BADGE_CLI_HPP
