// Command-line entry point: simulate, fit, fit-bt, diagnose, serve.
#include "bsbt/bt_mle.hpp"
#include "bsbt/diagnostics.hpp"
#include "bsbt/errors.hpp"
#include "bsbt/io.hpp"
#include "bsbt/mcmc.hpp"
#include "bsbt/service.hpp"
#include "bsbt/simulation.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace bsbt;
using nlohmann::json;

namespace {

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ValidationError("bad size '" + item + "' in --sizes");
    }
  }
  if (out.empty()) throw ValidationError("--sizes lists no sizes");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) if (!item.empty()) out.push_back(item);
  return out;
}

// Tally grouping and design for the fit: one group unless --groups names a covariate.
struct FitDesign {
  JudgeGrouping grouping = JudgeGrouping::single_group();
  GroupDesign design = GroupDesign::single();
  std::vector<std::string> labels;
};

FitDesign fit_design(const Dataset& ds, const std::string& covariate) {
  FitDesign out;
  if (covariate.empty()) return out;
  auto g = group_by_covariate(ds.judges, covariate);
  out.grouping = std::move(g.grouping);
  out.labels = g.labels;
  out.design = GroupDesign::categorical(g.labels);
  return out;
}

json outcome_counts(const std::vector<ComparisonRecord>& records) {
  json counts = json::object();
  for (const auto& r : records) counts[to_string(r.outcome)] = counts.value(to_string(r.outcome), 0) + 1;
  return counts;
}

// Reads the point estimate column of a fit directory: summary.csv (posterior
// mean) or bt_fit.csv (lambda_hat).
std::vector<std::pair<std::string, double>> read_estimates(const fs::path& dir) {
  if (fs::exists(dir / "summary.csv")) return read_summary_column(dir / "summary.csv", "mean");
  if (fs::exists(dir / "bt_fit.csv")) return read_summary_column(dir / "bt_fit.csv", "lambda_hat");
  throw ValidationError(dir.string() + " has neither summary.csv nor bt_fit.csv");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> align(const std::vector<std::pair<std::string, double>>& a,
                                                  const std::vector<std::pair<std::string, double>>& b,
                                                  const std::string& what) {
  std::map<std::string, double> lookup(b.begin(), b.end());
  if (lookup.size() != a.size()) throw ValidationError(what + ": the two inputs cover different areas");
  Eigen::VectorXd x(static_cast<Eigen::Index>(a.size())), y(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = lookup.find(a[i].first);
    if (it == lookup.end()) throw ValidationError(what + ": area '" + a[i].first + "' missing from the second input");
    x(static_cast<Eigen::Index>(i)) = a[i].second;
    y(static_cast<Eigen::Index>(i)) = it->second;
  }
  return {x, y};
}

std::string truth_csv(const AreaNetwork& net, const Eigen::VectorXd& truth) {
  std::ostringstream out;
  write_csv_row(out, {"area_id", "lambda"});
  for (std::size_t i = 0; i < net.size(); ++i)
    write_csv_row(out, {net.area(i).id, format_double(truth(static_cast<Eigen::Index>(i)))});
  return out.str();
}

httplib::Server* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian spatial Bradley-Terry: simulation, fitting, diagnostics and comparison collection"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a simulation study, or write one simulated dataset");
  std::string sim_config, sim_scenario, sim_sizes, sim_models;
  std::size_t sim_seeds = 0, sim_jobs = 1, sim_dataset_size = 0, sim_seed_index = 0;
  std::uint64_t sim_base_seed = 0;
  std::int64_t sim_iterations = 0, sim_burn_in = -1;
  double sim_delta = 0.0;
  std::string sim_out;
  sim->add_option("--config", sim_config, "Scenario config JSON (sizes, seeds, covariance, mcmc)");
  sim->add_option("--scenario", sim_scenario, "one_d or network_2d");
  sim->add_option("--sizes", sim_sizes, "Comma-separated comparison counts, e.g. 180,900,9000");
  sim->add_option("--seeds", sim_seeds, "Number of seeds per size");
  sim->add_option("--base-seed", sim_base_seed, "Master seed for the study");
  sim->add_option("--models", sim_models, "Comma-separated models: bt_mle,bsbt");
  sim->add_option("--iterations", sim_iterations, "MCMC iterations for BSBT fits");
  sim->add_option("--burn-in", sim_burn_in, "MCMC burn-in for BSBT fits");
  sim->add_option("--delta", sim_delta, "Underrelaxation for BSBT fits");
  sim->add_option("--jobs", sim_jobs, "Parallel study cells")->check(CLI::PositiveNumber);
  sim->add_option("--dataset-size", sim_dataset_size,
                  "Write one simulated dataset with this many comparisons instead of a study");
  sim->add_option("--seed-index", sim_seed_index, "Seed index of the dataset written with --dataset-size");
  sim->add_option("out", sim_out, "Output directory")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the BSBT model by MCMC");
  std::string fit_cov = "matrix-exponential", fit_ties, fit_groups, fit_start = "mode";
  double fit_length = 2.0, fit_chi = 0.1, fit_omega = 0.1, fit_delta = 0.01, fit_delta_beta = 0.0;
  std::int64_t fit_iter = 50000, fit_burn = 10000, fit_thin = 1;
  std::uint64_t fit_seed = 1;
  bool fit_dof = false, fit_every_var = false;
  std::string fit_data, fit_out;
  fit->add_option("--covariance", fit_cov, "matrix-exponential or network-squared-exponential");
  fit->add_option("--length-scale", fit_length, "Length scale of the squared-exponential kernel");
  fit->add_option("--alpha-prior-chi", fit_chi, "Inverse-gamma shape for alpha^2");
  fit->add_option("--alpha-prior-omega", fit_omega, "Inverse-gamma rate for alpha^2");
  fit->add_option("--delta", fit_delta, "Underrelaxation of the lambda proposal");
  fit->add_option("--delta-beta", fit_delta_beta, "Underrelaxation of the judge-covariate proposals (default: --delta)");
  fit->add_option("--iterations", fit_iter, "MCMC iterations");
  fit->add_option("--burn-in", fit_burn, "Iterations discarded before storing");
  fit->add_option("--thin", fit_thin, "Store every n-th iteration after burn-in");
  fit->add_option("--seed", fit_seed, "MCMC seed");
  fit->add_option("--ties", fit_ties, "random:SEED, halfwin or discard (default random:<--seed>)");
  fit->add_option("--groups", fit_groups, "Judge covariate defining groups (needs judges.csv)");
  fit->add_option("--start", fit_start, "mode or zero");
  fit->add_flag("--dof-adjust", fit_dof, "Use shape chi + (N-1)/2 in the alpha^2 Gibbs step");
  fit->add_flag("--store-every-variance-draw", fit_every_var, "Keep alpha^2 draws at every post-burn-in iteration");
  fit->add_option("data", fit_data, "Dataset directory")->required();
  fit->add_option("out", fit_out, "Output directory")->required();

  // fit-bt
  auto* fitbt = app.add_subcommand("fit-bt", "Maximum-likelihood Bradley-Terry fit with quasi-variances");
  std::string bt_ties = "discard", bt_data, bt_out;
  fitbt->add_option("--ties", bt_ties, "random:SEED, halfwin or discard");
  fitbt->add_option("data", bt_data, "Dataset directory")->required();
  fitbt->add_option("out", bt_out, "Output directory")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Summaries, traces, judge scores, Spearman and MAE");
  std::string d_chain, d_trace, d_judges, d_fit, d_ties, d_truth, d_mae, d_out;
  std::vector<std::string> d_spearman;
  std::size_t d_burn = 0, d_thin = 1;
  diag->add_option("--chain", d_chain, "Chain directory to summarise (writes summary.csv)");
  diag->add_option("--burn-in", d_burn, "Stored draws to discard before summarising");
  diag->add_option("--thin", d_thin, "Keep every n-th stored draw");
  diag->add_option("--trace", d_trace, "Comma-separated trace parameters, e.g. lambda_0,alpha_sq_lambda");
  diag->add_option("--judges", d_judges, "Dataset directory whose judges to score (needs --fit)");
  diag->add_option("--fit", d_fit, "Fit directory providing lambda for --judges");
  diag->add_option("--ties", d_ties, "Tie treatment for --judges (default discard)");
  diag->add_option("--spearman", d_spearman, "Two fit directories to rank-correlate")->expected(2);
  diag->add_option("--mae", d_mae, "Fit directory to score against --truth");
  diag->add_option("--truth", d_truth, "CSV with area_id,lambda");
  diag->add_option("--out", d_out, "Directory for CSV outputs");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the comparison-collection HTTP service");
  int s_port = 8080;
  std::string s_host = "127.0.0.1", s_data;
  std::uint64_t s_seed = 1;
  serve->add_option("--port", s_port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", s_host, "Bind address");
  serve->add_option("--data-dir", s_data, "Directory with areas.csv, edges.csv; the judgement log is kept here")->required();
  serve->add_option("--seed", s_seed, "Pair scheduling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (*sim) {
      StudyConfig config;
      if (!sim_config.empty()) config = study_config_from_json(json::parse(read_file(sim_config)));
      if (!sim_scenario.empty()) config.scenario = parse_scenario(sim_scenario);
      if (!sim_sizes.empty()) config.sizes = parse_sizes(sim_sizes);
      if (sim_seeds) config.n_seeds = sim_seeds;
      if (sim->count("--base-seed")) config.base_seed = sim_base_seed;
      if (!sim_models.empty()) {
        config.models.clear();
        for (const auto& m : split_list(sim_models)) config.models.push_back(parse_model(m));
      }
      if (sim_iterations) config.mcmc.iterations = sim_iterations;
      if (sim_burn_in >= 0) config.mcmc.burn_in = sim_burn_in;
      if (sim_delta > 0.0) config.mcmc.delta = sim_delta;
      config.jobs = sim_jobs;
      config.validate();

      ResultBundle bundle;
      bundle.set_config(study_config_json(config));
      if (sim_dataset_size) {
        const StudyWorld world = study_world(config, sim_seed_index);
        const std::uint64_t seed = study_cell_seed(config, sim_seed_index, sim_dataset_size, 1);
        const auto data = simulate_comparisons(world.network, world.truth, sim_dataset_size, seed);
        bundle.set_seeds({{"world", study_cell_seed(config, sim_seed_index, 0, 0)}, {"comparisons", seed}});
        bundle.add("areas.csv", areas_csv(world.network));
        bundle.add("edges.csv", edges_csv(world.network));
        bundle.add("comparisons.csv", comparisons_csv(data.records));
        bundle.add("truth.csv", truth_csv(world.network, world.truth));
        bundle.publish(sim_out);
        std::printf("wrote %zu comparisons (%.1f judge hours) over %zu areas to %s\n", data.records.size(),
                    data.judge_hours(), world.network.size(), sim_out.c_str());
        return 0;
      }
      const StudyReport report = run_study(config);
      bundle.set_seeds({{"base_seed", config.base_seed}});
      bundle.add("study_report.csv", study_report_csv(report));
      bundle.publish(sim_out);
      std::printf("%-10s %-7s %-10s %s\n", "size", "model", "mean_mae", "undefined");
      for (const auto& m : report.means)
        std::printf("%-10zu %-7s %-10s %zu\n", m.size, to_string(m.model).c_str(),
                    m.mean_mae ? format_double(*m.mean_mae).c_str() : "UNDEFINED", m.undefined);
      return 0;
    }

    if (*fit) {
      const Dataset ds = load_dataset(fit_data);
      const FitDesign fd = fit_design(ds, fit_groups);
      const TieTreatment ties =
          fit_ties.empty() ? TieTreatment{TieMode::kRandomAllocate, fit_seed} : TieTreatment::parse(fit_ties);
      const ComparisonTally counts = treat_ties(tally(ds.network, ds.records, fd.grouping), ties);
      CovarianceSpec spec{parse_kernel_kind(fit_cov), 1.0, fit_length};
      const CovarianceMatrix cov = make_covariance(ds.network, spec);

      MCMCConfig mc;
      mc.iterations = fit_iter;
      mc.burn_in = fit_burn;
      mc.thinning = fit_thin;
      mc.delta = fit_delta;
      if (fit_delta_beta > 0.0) mc.delta_beta = fit_delta_beta;
      mc.chi = fit_chi;
      mc.omega = fit_omega;
      mc.seed = fit_seed;
      mc.dof_adjust = fit_dof;
      mc.store_every_variance_draw = fit_every_var;
      mc.start = parse_start_point(fit_start);
      mc.validate();

      const auto progress_every = std::max<std::int64_t>(1, fit_iter / 10);
      const PosteriorSamples samples = run_chain(counts, fd.design, cov, mc, [&](std::int64_t it) {
        if (it % progress_every == 0) std::fprintf(stderr, "iteration %lld/%lld\n", static_cast<long long>(it),
                                                   static_cast<long long>(fit_iter));
      });
      const PosteriorSummary summary = summarize(samples);

      const json meta{{"covariance", {{"kind", to_string(spec.kind)}, {"length_scale", spec.length_scale}}},
                      {"ties", ties.describe()},
                      {"groups", fit_groups},
                      {"psd_clipped_eigenvalues", cov.repair.clipped_eigenvalues}};
      ResultBundle bundle;
      for (auto& [name, content] : chain_files(samples, ds.network, fd.labels, meta).files)
        bundle.add("chain/" + name, content);
      bundle.add("summary.csv", summary_csv(ds.network, summary.lambda));
      for (std::size_t p = 0; p < summary.beta.size(); ++p)
        bundle.add("beta_" + std::to_string(p) + "_summary.csv", summary_csv(ds.network, summary.beta[p]));
      {
        std::ostringstream v;
        write_csv_row(v, {"parameter", "mean", "median", "variance", "q025", "q975"});
        auto row = [&](const std::string& name, const ParameterSummary& s) {
          write_csv_row(v, {name, format_double(s.mean), format_double(s.median), format_double(s.variance),
                            format_double(s.q025), format_double(s.q975)});
        };
        row("alpha_sq_lambda", summary.alpha_sq_lambda);
        for (std::size_t p = 0; p < summary.alpha_sq_beta.size(); ++p)
          row("alpha_sq_" + std::to_string(p), summary.alpha_sq_beta[p]);
        bundle.add("variance_summary.csv", v.str());
      }
      json config = mcmc_config_json(mc);
      config["covariance"] = meta["covariance"];
      config["ties"] = ties.describe();
      config["groups"] = fit_groups;
      bundle.set_config(config);
      bundle.set_seeds({{"mcmc", mc.seed}, {"ties", ties.seed}});
      bundle.publish(fit_out);
      std::printf("stored %zu draws; lambda acceptance %s; alpha_sq_lambda posterior mean %s\n", samples.stored(),
                  format_double(samples.lambda_acceptance).c_str(),
                  format_double(summary.alpha_sq_lambda.mean).c_str());
      std::printf("records by outcome: %s\n", outcome_counts(ds.records).dump().c_str());
      return 0;
    }

    if (*fitbt) {
      const Dataset ds = load_dataset(bt_data);
      const TieTreatment ties = TieTreatment::parse(bt_ties);
      const ComparisonTally counts = treat_ties(tally(ds.network, ds.records), ties);
      const BTFitResult res = fit_bt_mle(counts);
      ResultBundle bundle;
      bundle.add("bt_fit.csv", bt_fit_csv(ds.network, res));
      bundle.set_config({{"ties", ties.describe()}});
      bundle.set_seeds({{"ties", ties.seed}});
      bundle.publish(bt_out);
      std::size_t divergent = 0;
      for (auto s : res.status) divergent += s == Estimability::kDivergent;
      std::printf("method %s, %zu of %zu areas defined (%zu divergent); quasi-variance worst relative error %s\n",
                  res.method.c_str(), res.num_defined(), ds.network.size(), divergent,
                  format_double(res.quasi_fit.worst_relative_error).c_str());
      return 0;
    }

    if (*diag) {
      bool did = false;
      ResultBundle bundle;
      if (!d_chain.empty()) {
        const PosteriorSamples samples = load_chain(d_chain);
        const PosteriorSummary summary = summarize(samples, d_burn, d_thin);
        // Area ids come from the lambda.csv header.
        const CsvTable header = read_csv(fs::path(d_chain) / "lambda.csv");
        std::vector<Area> areas;
        for (std::size_t c = 1; c < header.header.size(); ++c) areas.push_back({header.header[c], header.header[c], {}, {}, {}});
        const AreaNetwork ids = build_network(std::move(areas), {});
        bundle.add("summary.csv", summary_csv(ids, summary.lambda));
        if (!d_trace.empty()) {
          std::vector<TraceRequest> requests;
          for (const auto& p : split_list(d_trace)) requests.push_back(TraceRequest::parse(p));
          bundle.add("traces.csv", traces_csv(export_traces(samples, requests)));
        }
        did = true;
      }
      if (!d_judges.empty()) {
        if (d_fit.empty()) throw ValidationError("--judges needs --fit");
        const Dataset ds = load_dataset(d_judges);
        const auto estimates = read_estimates(d_fit);
        Eigen::VectorXd lambda(static_cast<Eigen::Index>(ds.network.size()));
        std::map<std::string, double> lookup(estimates.begin(), estimates.end());
        for (std::size_t i = 0; i < ds.network.size(); ++i) {
          auto it = lookup.find(ds.network.area(i).id);
          if (it == lookup.end()) throw ValidationError("fit has no estimate for area '" + ds.network.area(i).id + "'");
          lambda(static_cast<Eigen::Index>(i)) = it->second;
        }
        if (!lambda.allFinite()) throw ValidationError("fit has undefined estimates; judge scores need every area");
        const TieTreatment ties = d_ties.empty() ? TieTreatment{TieMode::kDiscard, 0} : TieTreatment::parse(d_ties);
        const auto observed = resolve_outcomes(ds.network, ds.records, JudgeGrouping::single_group(), ties);
        const auto scores = judge_heuristic(ds.network, ds.records, observed, lambda);
        bundle.add("judge_scores.csv", judge_scores_csv(scores));
        for (const auto& s : scores)
          std::printf("judge %s n=%zu x2=%s\n", s.judge_id.c_str(), s.n_comparisons, format_double(s.x2).c_str());
        did = true;
      }
      if (!d_spearman.empty()) {
        const auto [a, b] = align(read_estimates(d_spearman[0]), read_estimates(d_spearman[1]), "--spearman");
        std::printf("spearman %s\n", format_double(spearman(a, b)).c_str());
        did = true;
      }
      if (!d_mae.empty()) {
        if (d_truth.empty()) throw ValidationError("--mae needs --truth");
        const auto [est, truth] = align(read_estimates(d_mae), read_summary_column(d_truth, "lambda"), "--mae");
        const auto value = mae(truth, est);
        std::printf("mae %s\n", value ? format_double(*value).c_str() : "UNDEFINED");
        did = true;
      }
      if (!did) throw ValidationError("diagnose needs at least one of --chain, --judges, --spearman, --mae");
      if (!bundle.empty()) {
        if (d_out.empty()) throw ValidationError("--out is required to write summaries, traces or judge scores");
        bundle.publish(d_out);
      }
      return 0;
    }

    if (*serve) {
      const fs::path dir = s_data;
      std::vector<EdgeSpec> edges;
      AreaNetwork net = load_network(dir / "areas.csv", dir / "edges.csv", &edges);
      json geojson = nullptr;
      if (fs::exists(dir / "areas.geojson")) geojson = json::parse(read_file(dir / "areas.geojson"));
      SessionState session(std::move(net), SessionOptions{dir / "judgements.jsonl", s_seed, {}});
      httplib::Server server;
      install_routes(server, session, geojson);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      int port = s_port;
      if (port == 0) {
        port = server.bind_to_any_port(s_host);
        if (port < 0) throw RuntimeFailure("cannot bind " + s_host);
      } else if (!server.bind_to_port(s_host, port)) {
        throw RuntimeFailure("cannot bind " + s_host + ":" + std::to_string(port));
      }
      std::printf("listening on http://%s:%d\n", s_host.c_str(), port);
      std::fflush(stdout);
      server.listen_after_bind();
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
