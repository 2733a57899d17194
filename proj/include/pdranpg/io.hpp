#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/errors.hpp"
#include "pdranpg/oracle.hpp"
#include "pdranpg/outer_loop.hpp"
#include "pdranpg/policy.hpp"

namespace pdranpg {

using json = nlohmann::json;

// A loaded CMDP document: the spec plus optional log-linear features
// ("features": S x A x d nested arrays).
template <typename Scalar = double>
struct cmdp_document {
  cmdp_spec<Scalar> spec;
  std::optional<std::vector<matrix_t<Scalar>>> features;  // per state, d x A
};

namespace detail {

inline const json& expect_field(const json& j, const std::string& key) {
  if (!j.contains(key)) throw validation_error(key + ": missing field");
  return j.at(key);
}

inline double expect_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw validation_error(path + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

template <typename Scalar = double>
cmdp_document<Scalar> parse_cmdp_json(const json& j) {
  using detail::expect_field;
  using detail::expect_number;
  cmdp_document<Scalar> doc;
  auto& spec = doc.spec;
  spec.n_states = expect_field(j, "n_states").get<index_t>();
  spec.n_actions = expect_field(j, "n_actions").get<index_t>();
  if (spec.n_states <= 0) throw validation_error("n_states: must be positive");
  if (spec.n_actions <= 0) throw validation_error("n_actions: must be positive");
  spec.gamma = static_cast<Scalar>(expect_number(expect_field(j, "gamma"), "gamma"));
  const index_t S = spec.n_states, A = spec.n_actions;

  const json& rho = expect_field(j, "rho");
  if (!rho.is_array() || static_cast<index_t>(rho.size()) != S)
    throw validation_error("rho: expected an array of length n_states");
  spec.rho.resize(S);
  for (index_t s = 0; s < S; ++s)
    spec.rho(s) = static_cast<Scalar>(expect_number(rho[s], "rho[" + std::to_string(s) + "]"));

  auto parse_table = [&](const char* key) {
    const json& t = expect_field(j, key);
    if (!t.is_array() || static_cast<index_t>(t.size()) != S)
      throw validation_error(std::string(key) + ": expected n_states rows");
    matrix_t<Scalar> m(S, A);
    for (index_t s = 0; s < S; ++s) {
      const json& row = t[s];
      if (!row.is_array() || static_cast<index_t>(row.size()) != A)
        throw validation_error(std::string(key) + "[" + std::to_string(s) +
                               "]: expected n_actions entries");
      for (index_t a = 0; a < A; ++a)
        m(s, a) = static_cast<Scalar>(expect_number(
            row[a], std::string(key) + "[" + std::to_string(s) + "][" + std::to_string(a) + "]"));
    }
    return m;
  };
  spec.reward = parse_table("reward");
  spec.cost = parse_table("cost");

  const json& tr = expect_field(j, "transition");
  if (!tr.is_array() || static_cast<index_t>(tr.size()) != S)
    throw validation_error("transition: expected n_states outer entries");
  spec.transition.resize(S * A, S);
  for (index_t s = 0; s < S; ++s) {
    const json& per_action = tr[s];
    if (!per_action.is_array() || static_cast<index_t>(per_action.size()) != A)
      throw validation_error("transition[" + std::to_string(s) + "]: expected n_actions rows");
    for (index_t a = 0; a < A; ++a) {
      const json& row = per_action[a];
      const std::string path = "transition[" + std::to_string(s) + "][" + std::to_string(a) + "]";
      if (!row.is_array() || static_cast<index_t>(row.size()) != S)
        throw validation_error(path + ": expected n_states probabilities");
      for (index_t t2 = 0; t2 < S; ++t2)
        spec.transition(s * A + a, t2) =
            static_cast<Scalar>(expect_number(row[t2], path + "[" + std::to_string(t2) + "]"));
    }
  }
  if (j.contains("c_slat"))
    spec.c_slat = static_cast<Scalar>(expect_number(j.at("c_slat"), "c_slat"));
  spec.validate();

  if (j.contains("features")) {
    const json& f = j.at("features");
    if (!f.is_array() || static_cast<index_t>(f.size()) != S)
      throw validation_error("features: expected n_states outer entries");
    std::vector<matrix_t<Scalar>> feats;
    feats.reserve(S);
    index_t d = -1;
    for (index_t s = 0; s < S; ++s) {
      const json& per_action = f[s];
      if (!per_action.is_array() || static_cast<index_t>(per_action.size()) != A)
        throw validation_error("features[" + std::to_string(s) + "]: expected n_actions rows");
      for (index_t a = 0; a < A; ++a) {
        const json& vec = per_action[a];
        const std::string path = "features[" + std::to_string(s) + "][" + std::to_string(a) + "]";
        if (!vec.is_array() || vec.empty()) throw validation_error(path + ": expected a vector");
        if (d < 0) {
          d = static_cast<index_t>(vec.size());
          for (index_t q = 0; q < S; ++q) feats.emplace_back(matrix_t<Scalar>::Zero(d, A));
        }
        if (static_cast<index_t>(vec.size()) != d)
          throw validation_error(path + ": inconsistent feature dimension");
        for (index_t i = 0; i < d; ++i)
          feats[s](i, a) =
              static_cast<Scalar>(expect_number(vec[i], path + "[" + std::to_string(i) + "]"));
      }
    }
    doc.features = std::move(feats);
  }
  return doc;
}

template <typename Scalar = double>
cmdp_document<Scalar> load_cmdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cmdp file not readable: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw validation_error("cmdp file " + path + ": " + e.what());
  }
  try {
    return parse_cmdp_json<Scalar>(j);
  } catch (const validation_error& e) {
    throw validation_error(path + ": " + e.what());
  }
}

template <typename Scalar>
json to_json(const oracle_report<Scalar>& rep) {
  auto matrix_rows = [](const matrix_t<Scalar>& m) {
    json rows = json::array();
    for (index_t s = 0; s < m.rows(); ++s) {
      json row = json::array();
      for (index_t a = 0; a < m.cols(); ++a) row.push_back(m(s, a));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j;
  j["v"] = std::vector<Scalar>(rep.v.data(), rep.v.data() + rep.v.size());
  j["q"] = matrix_rows(rep.q);
  j["adv"] = matrix_rows(rep.adv);
  j["occupancy_d"] = std::vector<Scalar>(rep.occupancy_d.data(),
                                         rep.occupancy_d.data() + rep.occupancy_d.size());
  j["occupancy_nu"] = matrix_rows(rep.occupancy_nu);
  j["j_value"] = rep.j_value;
  return j;
}

template <typename Scalar = double>
oracle_report<Scalar> oracle_report_from_json(const json& j) {
  oracle_report<Scalar> rep;
  const auto v = j.at("v").get<std::vector<Scalar>>();
  rep.v = Eigen::Map<const vector_t<Scalar>>(v.data(), static_cast<index_t>(v.size()));
  auto read_matrix = [&](const char* key) {
    const json& rows = j.at(key);
    matrix_t<Scalar> m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (index_t s = 0; s < m.rows(); ++s)
      for (index_t a = 0; a < m.cols(); ++a) m(s, a) = rows[s][a].get<Scalar>();
    return m;
  };
  rep.q = read_matrix("q");
  rep.adv = read_matrix("adv");
  const auto d = j.at("occupancy_d").get<std::vector<Scalar>>();
  rep.occupancy_d = Eigen::Map<const vector_t<Scalar>>(d.data(), static_cast<index_t>(d.size()));
  rep.occupancy_nu = read_matrix("occupancy_nu");
  rep.j_value = j.at("j_value").get<Scalar>();
  return rep;
}

// Experiment configuration consumed by the CLI.
struct experiment_config {
  std::string cmdp_path;
  schedule_config<double> sched;
  bool schedule_has_constants = false;  // G/B/mu_F supplied explicitly
  run_mode mode = run_mode::stochastic;
  std::vector<std::uint64_t> seeds;
  index_t record_stride = 1;
  std::string output_dir = ".";
  long sample_budget = 100000000;  // transitions per run/sweep point
};

inline experiment_config parse_experiment_config(const json& j, const std::string& base_dir) {
  experiment_config cfg;
  cfg.cmdp_path = detail::expect_field(j, "cmdp_path").get<std::string>();
  if (!cfg.cmdp_path.empty() && cfg.cmdp_path[0] != '/' && !base_dir.empty())
    cfg.cmdp_path = base_dir + "/" + cfg.cmdp_path;
  const json& s = detail::expect_field(j, "schedule");
  cfg.sched.epsilon = detail::expect_number(detail::expect_field(s, "epsilon"), "schedule.epsilon");
  if (s.contains("epsilon_bias")) cfg.sched.epsilon_bias = s.at("epsilon_bias").get<double>();
  if (s.contains("c_slat")) cfg.sched.c_slat = s.at("c_slat").get<double>();
  if (s.contains("C_bar")) cfg.sched.C_bar = s.at("C_bar").get<double>();
  if (s.contains("C")) cfg.sched.C = s.at("C").get<double>();
  if (s.contains("G") && s.contains("mu_F")) {
    cfg.sched.G = s.at("G").get<double>();
    cfg.sched.B = s.contains("B") ? s.at("B").get<double>() : 0.0;
    cfg.sched.mu_F = s.at("mu_F").get<double>();
    cfg.schedule_has_constants = true;
  }
  if (s.contains("overrides")) {
    const json& o = s.at("overrides");
    if (o.contains("tau")) cfg.sched.overrides.tau = o.at("tau").get<double>();
    if (o.contains("eta")) cfg.sched.overrides.eta = o.at("eta").get<double>();
    if (o.contains("lambda_max")) cfg.sched.overrides.lambda_max = o.at("lambda_max").get<double>();
    if (o.contains("K")) cfg.sched.overrides.K = o.at("K").get<index_t>();
    if (o.contains("H")) cfg.sched.overrides.H = o.at("H").get<index_t>();
  }
  const std::string mode = detail::expect_field(j, "mode").get<std::string>();
  if (mode == "stochastic")
    cfg.mode = run_mode::stochastic;
  else if (mode == "exact")
    cfg.mode = run_mode::exact_gradients;
  else
    throw validation_error("mode: expected \"stochastic\" or \"exact\"");
  cfg.seeds = detail::expect_field(j, "seeds").get<std::vector<std::uint64_t>>();
  if (cfg.seeds.empty()) throw validation_error("seeds: must be nonempty");
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    for (std::size_t k = i + 1; k < cfg.seeds.size(); ++k)
      if (cfg.seeds[i] == cfg.seeds[k]) throw validation_error("seeds: must be distinct");
  if (j.contains("record_stride")) cfg.record_stride = j.at("record_stride").get<index_t>();
  if (cfg.record_stride <= 0) throw validation_error("record_stride: must be positive");
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("sample_budget")) cfg.sample_budget = j.at("sample_budget").get<long>();
  return cfg;
}

inline experiment_config load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("config file not readable: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw validation_error("config file " + path + ": " + e.what());
  }
  const auto parent = std::filesystem::path(path).parent_path().string();
  return parse_experiment_config(j, parent);
}

// Writes content to path via a temp file + rename so readers never observe a
// partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
std::string records_to_csv(const std::vector<run_record<Scalar>>& records) {
  std::ostringstream out;
  out.precision(17);
  out << "k,optimality_gap,violation,phi_surrogate,omega_norm,lambda,samples_cumulative\n";
  for (const auto& r : records)
    out << r.k << ',' << r.optimality_gap << ',' << r.violation << ',' << r.phi_surrogate << ','
        << r.omega_norm << ',' << r.lambda << ',' << r.samples_cumulative << '\n';
  return out.str();
}

}  // namespace pdranpg
