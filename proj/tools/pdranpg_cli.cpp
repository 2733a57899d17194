// Experiment harness for the PDR-ANPG library: seeded batch runs with CSV
// metric output, lemma verification against a configured CMDP, and epsilon
// sweeps for gap-vs-samples curves.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pdranpg/checks.hpp"
#include "pdranpg/io.hpp"
#include "pdranpg/occupancy_lp.hpp"
#include "pdranpg/outer_loop.hpp"
#include "pdranpg/policy.hpp"

namespace {

using namespace pdranpg;

constexpr int kExitConfig = 2;
constexpr int kExitSchedule = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitVerifyFailed = 5;
constexpr double kMuFloor = 1e-3;

struct cli_overrides {
  bool exact = false;
  index_t k_override = -1;
  index_t record_stride = -1;
  std::string output_dir;
  std::uint64_t seed_offset = 0;
};

struct prepared_experiment {
  experiment_config cfg;
  cmdp_spec<double> spec;
  policy_model<double> model{policy_model<double>::tabular_softmax(1, 1)};
  schedule<double> sched;
  score_bounds<double> measured;
  double mu_f = 0;
  double lp_lambda_star = 0;
  double lp_j_r_star = 0;
};

policy_model<double> build_model(const cmdp_document<double>& doc, const json& raw_config) {
  std::string kind = "tabular_softmax";
  if (raw_config.contains("policy")) kind = raw_config.at("policy").get<std::string>();
  if (kind == "tabular_softmax")
    return policy_model<double>::tabular_softmax(doc.spec.n_states, doc.spec.n_actions);
  if (kind == "log_linear") {
    if (!doc.features)
      throw validation_error("policy: log_linear requires a \"features\" table in the CMDP file");
    return policy_model<double>::log_linear(doc.spec.n_states, doc.spec.n_actions, *doc.features);
  }
  throw validation_error("policy: expected \"tabular_softmax\" or \"log_linear\"");
}

// Pre-run measurement of G, B and the Fisher floor: theta_0 plus Gaussian
// parameter draws, with local perturbation pairs inside measure_score_bounds.
void measure_constants(prepared_experiment& prep) {
  rng_stream rng(0xC0FFEEu);
  std::vector<vector_t<double>> samples;
  samples.push_back(vector_t<double>::Zero(prep.model.dim()));
  for (int i = 0; i < 8; ++i) {
    vector_t<double> theta(prep.model.dim());
    rng_stream sub = rng.child(i);
    for (index_t j = 0; j < theta.size(); ++j) theta(j) = 0.7 * sub.next_gaussian();
    samples.push_back(theta);
  }
  prep.measured = measure_score_bounds(prep.model, samples, rng.child(100));
  double min_eig = std::numeric_limits<double>::infinity();
  for (const auto& theta : samples) {
    Eigen::SelfAdjointEigenSolver<matrix_t<double>> eig(
        exact_fisher(prep.spec, prep.model, theta));
    min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
  }
  prep.mu_f = std::max(min_eig, kMuFloor);
}

prepared_experiment prepare(const std::string& config_path, const cli_overrides& cli) {
  prepared_experiment prep;
  prep.cfg = load_experiment_config(config_path);
  if (cli.exact) prep.cfg.mode = run_mode::exact_gradients;
  if (cli.k_override >= 0) prep.cfg.sched.overrides.K = cli.k_override;
  if (cli.record_stride > 0) prep.cfg.record_stride = cli.record_stride;
  if (!cli.output_dir.empty()) prep.cfg.output_dir = cli.output_dir;
  if (cli.seed_offset != 0)
    for (auto& s : prep.cfg.seeds) s += cli.seed_offset;

  const auto doc = load_cmdp<double>(prep.cfg.cmdp_path);
  prep.spec = doc.spec;
  {
    std::ifstream in(config_path);
    json raw;
    in >> raw;
    prep.model = build_model(doc, raw);
  }

  if (prep.cfg.schedule_has_constants) {
    prep.measured.G = prep.cfg.sched.G;
    prep.measured.B = prep.cfg.sched.B;
    prep.mu_f = prep.cfg.sched.mu_F;
  } else {
    measure_constants(prep);
    prep.cfg.sched.G = prep.measured.G;
    prep.cfg.sched.B = prep.measured.B;
    prep.cfg.sched.mu_F = prep.mu_f;
  }

  const auto lp = solve_constrained_optimum(prep.spec);
  prep.lp_lambda_star = lp.lambda_star;
  prep.lp_j_r_star = lp.j_r;
  if (!(prep.cfg.sched.c_slat > 0)) {
    prep.cfg.sched.c_slat = prep.spec.c_slat > 0 ? prep.spec.c_slat : lp.max_attainable_jc;
    if (!(prep.cfg.sched.c_slat > 0))
      throw validation_error("c_slat: instance has no strictly feasible policy");
  }

  prep.sched = derive_schedule(prep.cfg.sched, prep.spec.gamma);
  if (prep.lp_lambda_star > prep.sched.lambda_max)
    std::cerr << "warning: LP dual lambda* = " << prep.lp_lambda_star
              << " exceeds lambda_max = " << prep.sched.lambda_max
              << "; Theorem-1 guarantees need lambda* <= lambda_max\n";
  if (prep.cfg.sched.overrides.K)
    std::cerr << "warning: K override in effect; Theorem-1 guarantees do not apply verbatim\n";
  return prep;
}

struct seed_outcome {
  std::uint64_t seed = 0;
  run_result<double> result;
};

std::vector<seed_outcome> run_all_seeds(const prepared_experiment& prep) {
  const auto& cfg = prep.cfg;
  run_options<double> opts;
  opts.mode = cfg.mode;
  opts.instrumentation = true;
  opts.record_stride = cfg.record_stride;
  opts.sample_budget = cfg.sample_budget;

  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(cfg.seeds.size())));
  std::vector<seed_outcome> outcomes(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      outcomes[i].seed = cfg.seeds[i];
      outcomes[i].result =
          run_pdr_anpg(prep.spec, prep.model, prep.sched, opts, rng_stream(cfg.seeds[i]));
    }
  };
  std::vector<std::future<void>> futs;
  for (unsigned w = 0; w < workers; ++w) futs.push_back(std::async(std::launch::async, worker));
  for (auto& f : futs) f.get();
  return outcomes;
}

json schedule_echo(const prepared_experiment& prep) {
  json j;
  j["epsilon"] = prep.cfg.sched.epsilon;
  j["epsilon_bias"] = prep.cfg.sched.epsilon_bias;
  j["tau"] = prep.sched.tau;
  j["eta"] = prep.sched.eta;
  j["K"] = prep.sched.K;
  j["H"] = prep.sched.H;
  j["lambda_max"] = prep.sched.lambda_max;
  j["c_slat"] = prep.cfg.sched.c_slat;
  j["rates"] = {{"alpha", prep.sched.rates.alpha},
                {"beta", prep.sched.rates.beta},
                {"xi", prep.sched.rates.xi},
                {"delta", prep.sched.rates.delta}};
  j["measured"] = {{"G", prep.cfg.sched.G}, {"B", prep.cfg.sched.B}, {"mu_F", prep.cfg.sched.mu_F}};
  j["lp"] = {{"j_r_star", prep.lp_j_r_star}, {"lambda_star", prep.lp_lambda_star}};
  return j;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_run(const std::string& config_path, const cli_overrides& cli) {
  const auto prep = prepare(config_path, cli);
  std::filesystem::create_directories(prep.cfg.output_dir);
  const auto outcomes = run_all_seeds(prep);

  json summary;
  summary["mode"] = prep.cfg.mode == run_mode::exact_gradients ? "exact" : "stochastic";
  summary["schedule"] = schedule_echo(prep);
  summary["record_stride"] = prep.cfg.record_stride;
  std::vector<double> gaps, violations;
  json per_seed = json::array();
  for (const auto& o : outcomes) {
    const auto csv = records_to_csv(o.result.records);
    write_file_atomic(prep.cfg.output_dir + "/seed_" + std::to_string(o.seed) + ".csv", csv);
    const auto& final_rec = o.result.records.back();
    gaps.push_back(final_rec.optimality_gap);
    violations.push_back(final_rec.violation);
    per_seed.push_back({{"seed", o.seed},
                        {"final_gap", final_rec.optimality_gap},
                        {"final_violation", final_rec.violation},
                        {"final_lambda", final_rec.lambda},
                        {"samples", o.result.samples_total},
                        {"iterations_run", o.result.iterations_run},
                        {"budget_truncated", o.result.budget_truncated},
                        {"min_fisher_eigenvalue_seen", o.result.min_fisher_eigenvalue_seen}});
    if (o.result.budget_truncated)
      std::cerr << "warning: seed " << o.seed << " truncated at k = " << o.result.iterations_run
                << " by the sample budget; Theorem-1 K not completed\n";
  }
  summary["per_seed"] = per_seed;
  summary["final_gap"] = {{"mean", std::accumulate(gaps.begin(), gaps.end(), 0.0) / gaps.size()},
                          {"median", median(gaps)}};
  summary["final_violation"] = {
      {"mean", std::accumulate(violations.begin(), violations.end(), 0.0) / violations.size()},
      {"median", median(violations)}};
  write_file_atomic(prep.cfg.output_dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << "run complete: " << outcomes.size() << " seed(s), results in "
            << prep.cfg.output_dir << "\n";
  return 0;
}

int cmd_verify(const std::string& config_path, const cli_overrides& cli) {
  const auto prep = prepare(config_path, cli);
  const auto& spec = prep.spec;
  const auto& model = prep.model;
  const double lam_max = prep.sched.lambda_max;
  rng_stream rng(0x5EEDu);

  std::vector<check_result> results;
  results.push_back(checks::lemma2_advantage_bound(spec, model, 100, lam_max, rng.child(1)));
  results.push_back(checks::lemma2_advantage_bound(spec, model, 20, lam_max, rng.child(2), true));
  results.push_back(checks::lemma5_gradient_bound(spec, model, 100, lam_max, rng.child(3)));
  results.push_back(checks::eq14_gradient_identity(spec, model, 25, lam_max, rng.child(4)));
  results.push_back(checks::lemma1_gradient_fd(spec, model, 25, lam_max, rng.child(5), false));
  results.push_back(checks::lemma1_gradient_fd(spec, model, 25, lam_max, rng.child(6), true));
  results.push_back(checks::lemma13_performance_difference(spec, 50, rng.child(7)));
  results.push_back(
      checks::lemma14_saddle_sandwich(spec, std::max(prep.sched.tau, 0.1), lam_max, 100, rng.child(8)));
  results.push_back(checks::lemma4_unbiasedness(spec, model, 2, 100000, lam_max, rng.child(9)));
  results.push_back(checks::lemma6_variance_dominance(spec, model, 1, 100000, lam_max,
                                                      prep.cfg.sched.G, prep.cfg.sched.mu_F,
                                                      rng.child(10)));
  results.push_back(checks::sampler_cost_audit(spec, model, 100000, rng.child(11)));
  results.push_back(checks::strong_duality_dual_bound(spec, prep.cfg.sched.c_slat));

  const check_result* first_fail = nullptr;
  for (const auto& r : results) {
    std::printf("%-36s %s  margin=% .3e  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL", r.margin,
                r.detail.c_str());
    if (!r.pass && !first_fail) first_fail = &r;
  }
  if (first_fail) {
    std::cerr << "verify failed at: " << first_fail->name << "\n";
    return kExitVerifyFailed;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const cli_overrides& cli,
              const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw validation_error("epsilons: sweep needs at least one value");
  auto base = prepare(config_path, cli);
  std::filesystem::create_directories(base.cfg.output_dir);
  std::ostringstream combined;
  combined.precision(17);
  combined << "epsilon,samples,final_gap,final_violation\n";
  for (const double eps : epsilons) {
    prepared_experiment prep = base;
    prep.cfg.sched.epsilon = eps;
    std::ostringstream tag;
    tag << "eps_" << eps;
    prep.cfg.output_dir = base.cfg.output_dir + "/" + tag.str();
    prep.sched = derive_schedule(prep.cfg.sched, prep.spec.gamma);
    std::filesystem::create_directories(prep.cfg.output_dir);

    const auto outcomes = run_all_seeds(prep);
    double gap = 0, violation = 0, samples = 0;
    json per_seed = json::array();
    for (const auto& o : outcomes) {
      write_file_atomic(prep.cfg.output_dir + "/seed_" + std::to_string(o.seed) + ".csv",
                        records_to_csv(o.result.records));
      gap += o.result.records.back().optimality_gap;
      violation += o.result.records.back().violation;
      samples += static_cast<double>(o.result.samples_total);
    }
    gap /= outcomes.size();
    violation /= outcomes.size();
    samples /= outcomes.size();
    json summary;
    summary["schedule"] = schedule_echo(prep);
    summary["final_gap_mean"] = gap;
    summary["final_violation_mean"] = violation;
    summary["samples_mean"] = samples;
    write_file_atomic(prep.cfg.output_dir + "/summary.json", summary.dump(2) + "\n");
    combined << eps << ',' << samples << ',' << gap << ',' << violation << '\n';
  }
  write_file_atomic(base.cfg.output_dir + "/sweep.csv", combined.str());
  std::cout << "sweep complete: " << epsilons.size() << " point(s), results in "
            << base.cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDR-ANPG experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  cli_overrides cli;
  std::vector<double> epsilons;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_flag("--exact", cli.exact, "force exact-gradient mode");
    sub->add_option("--k-override", cli.k_override, "override the outer iteration count");
    sub->add_option("--record-stride", cli.record_stride, "record metrics every N iterations");
    sub->add_option("--output-dir", cli.output_dir, "output directory");
    sub->add_option("--seed-offset", cli.seed_offset, "offset added to every seed");
  };
  CLI::App* run = app.add_subcommand("run", "execute PDR-ANPG per seed, write CSV + summary");
  add_common(run);
  CLI::App* verify = app.add_subcommand("verify", "run the lemma suite against the configured CMDP");
  add_common(verify);
  CLI::App* sweep = app.add_subcommand("sweep", "run per-epsilon schedules, write a combined CSV");
  add_common(sweep);
  sweep->add_option("--epsilons", epsilons, "epsilon values to sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfig : 0;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, cli);
    if (verify->parsed()) return cmd_verify(config_path, cli);
    return cmd_sweep(config_path, cli, epsilons);
  } catch (const schedule_error& e) {
    std::cerr << "schedule infeasible: " << e.what() << "\n";
    return kExitSchedule;
  } catch (const diverged_error& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const validation_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const infeasible_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
