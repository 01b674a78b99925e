#include "softdag/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "softdag/error.hpp"

#ifndef SOFTDAG_VERSION
#define SOFTDAG_VERSION "0.0.0"
#endif

namespace softdag {

const char* library_version() { return SOFTDAG_VERSION; }

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

ExactResult run_exact(const Environment& env, const RewardSpec& spec) {
  const auto& g = env.graph;
  const ValidationReport vr = validate_dag(g);
  if (!vr.is_valid) {
    const Violation& v = vr.violations.front();
    fail(ErrorCode::kPrecondition, std::string("graph is not a valid soft MDP: ") + to_string(v.kind) + " at state " +
                                       std::to_string(v.state));
  }
  const RewardScheme scheme = make_scheme(env, spec);
  const SoftValues values = soft_value_iteration(g, scheme);
  ExactResult r;
  r.oracle = terminating_distribution(g, optimal_policy(g, values));
  r.gibbs = gibbs_target(g, env.energy, spec.alpha);
  r.jsd = jsd(r.oracle, r.gibbs);
  r.log_z_oracle = values.v[g.initial_state()] / spec.alpha;
  r.log_z_gibbs = r.gibbs.log_z;
  r.oracle.log_z = r.log_z_oracle;
  r.biased = r.jsd > kBiasThreshold;

  double max_diff = 0.0, total = 0.0;
  std::ostringstream csv;
  csv << "state,label,probability,gibbs\n";
  for (std::size_t i = 0; i < r.oracle.states.size(); ++i) {
    const StateId x = r.oracle.states[i];
    max_diff = std::max(max_diff, std::abs(r.oracle.probs[i] - r.gibbs.probs[i]));
    total += r.oracle.probs[i];
    csv << x << ',' << csv_field(g.label(x)) << ',' << format_double(r.oracle.probs[i]) << ','
        << format_double(r.gibbs.probs[i]) << '\n';
  }
  r.distribution_csv = csv.str();

  Json& s = r.summary;
  s["env"] = env.kind;
  s["num_states"] = g.num_states();
  s["num_terminating"] = g.terminating_states().size();
  s["reward"] = to_string(spec.kind);
  s["backward"] = to_string(spec.backward);
  s["alpha"] = spec.alpha;
  s["jsd"] = r.jsd;
  s["log_z_oracle"] = r.log_z_oracle;
  s["log_z_gibbs"] = r.log_z_gibbs;
  s["max_abs_probability_gap"] = max_diff;
  s["probability_mass"] = total;
  s["bias_threshold"] = kBiasThreshold;
  s["biased"] = r.biased;
  return r;
}

RewardKind required_reward(EquivalencePair pair) {
  switch (pair) {
    case EquivalencePair::kPiSqlMdb: return RewardKind::kDenseCorrected;
    case EquivalencePair::kSqlFldb: return RewardKind::kForwardLooking;
    default: return RewardKind::kTerminalCorrected;
  }
}

Json equivalence_report_json(const EquivalenceReport& rep) {
  Json j;
  j["pair"] = to_string(rep.pair);
  j["alpha"] = rep.alpha;
  j["trials"] = rep.trials;
  j["units_checked"] = rep.units_checked;
  j["max_residual_gap"] = rep.max_residual_gap;
  j["max_loss_ratio_error"] = rep.max_loss_ratio_error;
  j["passed"] = rep.passed;
  j["num_violations"] = rep.num_violations;
  Json vs = Json::array();
  for (const auto& v : rep.violations)
    vs.push_back({{"trial", v.trial},
                  {"check", v.what},
                  {"unit", v.unit},
                  {"delta_rl", v.delta_rl},
                  {"delta_gfn", v.delta_gfn},
                  {"gap", v.gap}});
  j["violations"] = std::move(vs);
  return j;
}

namespace {

// Why a pair cannot run on this environment, or empty.
std::string pair_blocker(EquivalencePair pair, const Environment& env) {
  if (pair == EquivalencePair::kPiSqlMdb && env.graph.terminating_states().size() != env.graph.num_states())
    return "needs every state to be terminating";
  if (pair == EquivalencePair::kPiSqlMdb && !env.energy.state) return "needs per-state energies";
  if (pair == EquivalencePair::kSqlFldb && !env.energy.edge) return "needs edge energies";
  return {};
}

}  // namespace

EquivResult run_equiv(const Environment& env, const EquivOptions& opts) {
  const ValidationReport vr = validate_dag(env.graph);
  require(vr.is_valid, ErrorCode::kPrecondition, "graph is not a valid soft MDP");
  require(!opts.alphas.empty(), ErrorCode::kInvalidArgument, "no alpha given");
  const bool explicit_pairs = !opts.pairs.empty();
  std::vector<EquivalencePair> pairs = opts.pairs;
  if (!explicit_pairs)
    pairs = {EquivalencePair::kPclSubtb, EquivalencePair::kSqlDb, EquivalencePair::kPiSqlMdb,
             EquivalencePair::kSqlFldb};

  EquivResult out;
  Json runs = Json::array(), skipped = Json::array();
  for (EquivalencePair pair : pairs) {
    const std::string blocker = pair_blocker(pair, env);
    if (!blocker.empty()) {
      if (explicit_pairs) fail(ErrorCode::kPrecondition, std::string(to_string(pair)) + " " + blocker);
      skipped.push_back({{"pair", to_string(pair)}, {"reason", blocker}});
      continue;
    }
    for (double alpha : opts.alphas) {
      RewardSpec spec;
      spec.kind = opts.reward.value_or(required_reward(pair));
      spec.backward = opts.backward;
      spec.alpha = alpha;
      const RewardScheme scheme = make_scheme(env, spec);
      const EquivalenceReport rep =
          check_equivalence(pair, env.graph, env.energy, scheme, opts.trials, opts.tol, opts.ratio_tol, opts.seed);
      Json j = equivalence_report_json(rep);
      j["reward"] = to_string(spec.kind);
      j["backward"] = to_string(spec.backward);
      out.passed = out.passed && rep.passed;
      runs.push_back(std::move(j));
    }
  }
  out.report["env"] = env.kind;
  out.report["tol"] = opts.tol;
  out.report["ratio_tol"] = opts.ratio_tol;
  out.report["seed"] = opts.seed;
  out.report["passed"] = out.passed;
  out.report["runs"] = std::move(runs);
  out.report["skipped"] = std::move(skipped);
  return out;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "iteration,loss,jsd,pearson,epsilon\n";
  for (const auto& r : rows)
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.jsd) << ','
       << format_double(r.pearson) << ',' << format_double(r.epsilon) << '\n';
  return os.str();
}

TrainArtifacts run_train(const ExperimentConfig& cfg) {
  require(cfg.train.has_value(), ErrorCode::kPrecondition, "config has no 'train' section");
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  const Environment env = load_environment(cfg.env, cfg.base_dir);
  const ValidationReport vr = validate_dag(env.graph);
  require(vr.is_valid, ErrorCode::kPrecondition, "graph is not a valid soft MDP");
  const RewardScheme scheme = make_scheme(env, cfg.reward);
  const TrainResult res = train(env.graph, env.energy, scheme, *cfg.train);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  TrainArtifacts a;
  a.rows = res.rows;
  a.diverged = res.diverged;
  a.diagnostic = res.diagnostic;
  a.metrics_csv = metrics_to_csv(res.rows);
  a.params_json = params_to_json(env.graph, res.params, cfg.reward.alpha).dump(1) + "\n";

  const std::time_t tt = std::chrono::system_clock::to_time_t(started);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  Json m;
  m["tool"] = "softdag";
  m["version"] = library_version();
  m["config"] = config_echo(cfg);
  m["started_utc"] = stamp;
  m["wall_clock_seconds"] = seconds;
  m["outputs"] = {"metrics.csv", "params.json", "manifest.json"};
  m["diverged"] = res.diverged;
  if (res.diverged) m["diagnostic"] = res.diagnostic;
  if (!res.rows.empty()) {
    const auto& last = res.rows.back();
    m["final"] = {{"iteration", last.iteration},
                  {"loss", last.loss},
                  {"jsd", last.jsd},
                  {"pearson", last.pearson}};
  }
  a.manifest_json = m.dump(1) + "\n";
  return a;
}

}  // namespace softdag
