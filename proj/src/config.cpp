#include "softdag/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "softdag/error.hpp"

namespace softdag {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void bad(const std::string& where, const std::string& what) { fail(ErrorCode::kParse, where + ": " + what); }

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) bad(where, "unknown key '" + k + "'");
}

std::size_t as_size(const Json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    bad(where, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const Json& v, const std::string& where) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    bad(where, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

double as_double(const Json& v, const std::string& where) {
  if (!v.is_number()) bad(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(where, "expected a finite number");
  return x;
}

std::string as_string(const Json& v, const std::string& where) {
  if (!v.is_string()) bad(where, "expected a string");
  return v.get<std::string>();
}

bool as_bool(const Json& v, const std::string& where) {
  if (!v.is_boolean()) bad(where, "expected true or false");
  return v.get<bool>();
}

std::vector<double> as_doubles(const Json& v, const std::string& where) {
  if (!v.is_array()) bad(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string> as_strings(const Json& v, const std::string& where) {
  if (!v.is_array()) bad(where, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

EnvLimits parse_limits(const Json& spec) {
  EnvLimits lim;
  if (!spec.contains("limits")) return lim;
  const Json& l = spec["limits"];
  check_keys(l, {"max_states", "max_terminating"}, "env.limits");
  if (l.contains("max_states")) lim.max_states = as_size(l["max_states"], "env.limits.max_states");
  if (l.contains("max_terminating")) lim.max_terminating = as_size(l["max_terminating"], "env.limits.max_terminating");
  return lim;
}

std::vector<std::string> read_sequence_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open sequence file '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

Environment load_raw_graph(const Json& spec) {
  check_keys(spec, {"kind", "num_states", "initial_state", "edges", "terminating", "labels", "terminal_energy",
                    "edge_energy", "state_energy", "limits"},
             "graph");
  for (const char* k : {"num_states", "edges", "terminating"})
    if (!spec.contains(k)) bad("graph", std::string("missing '") + k + "'");
  const std::size_t n = as_size(spec["num_states"], "graph.num_states");
  const EnvLimits lim = parse_limits(spec);
  if (n == 0) bad("graph.num_states", "must be positive");
  if (n > lim.max_states) fail(ErrorCode::kLimit, "graph has " + std::to_string(n) + " states, over max_states");
  const StateId s0 = spec.contains("initial_state")
                         ? static_cast<StateId>(as_size(spec["initial_state"], "graph.initial_state"))
                         : 0;
  if (s0 >= n) bad("graph.initial_state", "out of range");

  std::vector<std::pair<StateId, StateId>> edges;
  if (!spec["edges"].is_array()) bad("graph.edges", "expected an array of [from, to] pairs");
  for (std::size_t i = 0; i < spec["edges"].size(); ++i) {
    const Json& e = spec["edges"][i];
    const std::string where = "graph.edges[" + std::to_string(i) + "]";
    if (!e.is_array() || e.size() != 2) bad(where, "expected [from, to]");
    const std::size_t a = as_size(e[0], where), b = as_size(e[1], where);
    if (a >= n || b >= n) bad(where, "state index out of range");
    edges.emplace_back(static_cast<StateId>(a), static_cast<StateId>(b));
  }

  std::vector<bool> term(n, false);
  const Json& t = spec["terminating"];
  if (!t.is_array()) bad("graph.terminating", "expected an array");
  if (t.size() == n && (n == 0 || t[0].is_boolean())) {
    for (std::size_t i = 0; i < n; ++i) term[i] = as_bool(t[i], "graph.terminating");
  } else {
    // Also accept a list of terminating state indices.
    for (const Json& x : t) {
      const std::size_t i = as_size(x, "graph.terminating");
      if (i >= n) bad("graph.terminating", "state index out of range");
      term[i] = true;
    }
  }
  std::vector<std::string> labels;
  if (spec.contains("labels")) {
    labels = as_strings(spec["labels"], "graph.labels");
    if (labels.size() != n) bad("graph.labels", "needs one label per state");
  }

  Environment env;
  env.kind = "graph";
  env.graph = SoftMdpGraph::from_edges(n, s0, edges, term, labels);
  const auto& g = env.graph;

  env.energy.terminal.assign(n, std::numeric_limits<double>::quiet_NaN());
  if (spec.contains("terminal_energy")) {
    const Json& te = spec["terminal_energy"];
    if (!te.is_array() || te.size() != n) bad("graph.terminal_energy", "needs one entry per state (null allowed)");
    for (std::size_t i = 0; i < n; ++i)
      if (!te[i].is_null()) env.energy.terminal[i] = as_double(te[i], "graph.terminal_energy");
  } else {
    for (StateId x : g.terminating_states()) env.energy.terminal[x] = 0.0;
  }
  for (StateId x : g.terminating_states())
    if (!std::isfinite(env.energy.terminal[x]))
      bad("graph.terminal_energy", "missing energy for terminating state " + std::to_string(x));

  if (spec.contains("edge_energy")) {
    std::vector<double> edge(g.total_actions(), 0.0);
    const Json& ee = spec["edge_energy"];
    if (!ee.is_array()) bad("graph.edge_energy", "expected an array of [from, to, energy]");
    for (std::size_t i = 0; i < ee.size(); ++i) {
      const std::string where = "graph.edge_energy[" + std::to_string(i) + "]";
      if (!ee[i].is_array() || ee[i].size() != 3) bad(where, "expected [from, to, energy]");
      const std::size_t a = as_size(ee[i][0], where), b = as_size(ee[i][1], where);
      if (a >= n || b >= n) bad(where, "state index out of range");
      const auto slot = g.action_of(static_cast<StateId>(a), static_cast<StateId>(b));
      if (!slot) bad(where, "not an edge");
      edge[g.action_offset(static_cast<StateId>(a)) + *slot] = as_double(ee[i][2], where);
    }
    env.energy.edge = std::move(edge);
  }
  if (spec.contains("state_energy")) {
    auto st = as_doubles(spec["state_energy"], "graph.state_energy");
    if (st.size() != n) bad("graph.state_energy", "needs one entry per state");
    if (spec.contains("terminal_energy")) bad("graph", "give 'state_energy' or 'terminal_energy', not both");
    const double base = st[s0];
    for (double& e : st) e -= base;
    for (StateId x : g.terminating_states()) env.energy.terminal[x] = st[x];
    env.energy.state = std::move(st);
  }
  return env;
}

}  // namespace

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "'" + path + "' is not valid JSON: " + e.what());
  }
}

Environment load_environment(const Json& spec, const std::string& base_dir) {
  if (!spec.is_object()) bad("env", "expected an object");
  if (!spec.contains("kind")) {
    if (spec.contains("num_states")) return load_raw_graph(spec);
    bad("env", "missing 'kind'");
  }
  const std::string kind = as_string(spec["kind"], "env.kind");
  Environment env;
  Json echo = spec;

  if (kind == "graph") {
    env = load_raw_graph(spec);
  } else if (kind == "fig1") {
    check_keys(spec, {"kind", "energies"}, "env");
    std::array<double, 3> e{0.0, 0.0, 0.0};
    if (spec.contains("energies")) {
      const auto v = as_doubles(spec["energies"], "env.energies");
      if (v.size() != 3) bad("env.energies", "fig1 needs three energies (x3, x4, x5)");
      std::copy(v.begin(), v.end(), e.begin());
    }
    echo["energies"] = e;
    env = build_fig1_toy(e);
  } else if (kind == "factor_graph") {
    check_keys(spec, {"kind", "d", "K", "structure", "seed", "factors", "limits"}, "env");
    if (!spec.contains("d") || !spec.contains("K")) bad("env", "factor_graph needs 'd' and 'K'");
    const std::size_t d = as_size(spec["d"], "env.d"), k = as_size(spec["K"], "env.K");
    FactorGraphSpec fg;
    if (spec.contains("factors")) {
      if (spec.contains("structure") || spec.contains("seed"))
        bad("env", "give either 'factors' or 'structure'/'seed', not both");
      fg.num_vars = d;
      fg.num_values = k;
      const Json& fs_ = spec["factors"];
      if (!fs_.is_array()) bad("env.factors", "expected an array");
      for (std::size_t i = 0; i < fs_.size(); ++i) {
        const std::string where = "env.factors[" + std::to_string(i) + "]";
        check_keys(fs_[i], {"scope", "table"}, where);
        if (!fs_[i].contains("scope") || !fs_[i].contains("table")) bad(where, "needs 'scope' and 'table'");
        Factor f;
        for (const Json& v : fs_[i]["scope"]) f.scope.push_back(as_size(v, where + ".scope"));
        f.table = as_doubles(fs_[i]["table"], where + ".table");
        fg.factors.push_back(std::move(f));
      }
    } else {
      const std::string structure = spec.contains("structure") ? as_string(spec["structure"], "env.structure") : "chain";
      const std::uint64_t seed = spec.contains("seed") ? as_u64(spec["seed"], "env.seed") : 0;
      echo["structure"] = structure;
      echo["seed"] = seed;
      try {
        fg = random_factor_graph(d, k, structure, seed);
      } catch (const Error& e) {
        fail(e.code() == ErrorCode::kInvalidArgument ? ErrorCode::kParse : e.code(), std::string("env: ") + e.what());
      }
    }
    env = build_factor_graph_env(fg, parse_limits(spec));
  } else if (kind == "subset") {
    check_keys(spec, {"kind", "n", "energies", "seed", "scale", "limits"}, "env");
    if (!spec.contains("n")) bad("env", "subset needs 'n'");
    const std::size_t n = as_size(spec["n"], "env.n");
    if (n > 20) fail(ErrorCode::kLimit, "subset env with n = " + std::to_string(n) + " exceeds 2^20 states");
    std::vector<double> energies;
    if (spec.contains("energies")) {
      if (spec.contains("seed") || spec.contains("scale")) bad("env", "give either 'energies' or 'seed'/'scale'");
      energies = as_doubles(spec["energies"], "env.energies");
    } else {
      const std::uint64_t seed = spec.contains("seed") ? as_u64(spec["seed"], "env.seed") : 0;
      const double scale = spec.contains("scale") ? as_double(spec["scale"], "env.scale") : 1.0;
      echo["seed"] = seed;
      echo["scale"] = scale;
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> nd(0.0, 1.0);
      energies.resize(std::size_t{1} << n);
      for (double& e : energies) e = scale * nd(rng);
    }
    env = build_subset_env(n, std::move(energies), parse_limits(spec));
  } else if (kind == "phylo") {
    check_keys(spec, {"kind", "sequences", "sequences_file", "random", "names", "scale", "limits"}, "env");
    const int sources = int(spec.contains("sequences")) + int(spec.contains("sequences_file")) +
                        int(spec.contains("random"));
    if (sources != 1) bad("env", "phylo needs exactly one of 'sequences', 'sequences_file', 'random'");
    PhyloSpec ps;
    if (spec.contains("sequences")) {
      ps.sequences = as_strings(spec["sequences"], "env.sequences");
    } else if (spec.contains("sequences_file")) {
      fs::path p = as_string(spec["sequences_file"], "env.sequences_file");
      if (p.is_relative()) p = fs::path(base_dir) / p;
      ps.sequences = read_sequence_file(p);
    } else {
      const Json& r = spec["random"];
      check_keys(r, {"species", "length", "seed"}, "env.random");
      if (!r.contains("species") || !r.contains("length")) bad("env.random", "needs 'species' and 'length'");
      const std::size_t d = as_size(r["species"], "env.random.species");
      const std::size_t len = as_size(r["length"], "env.random.length");
      const std::uint64_t seed = r.contains("seed") ? as_u64(r["seed"], "env.random.seed") : 0;
      echo["random"]["seed"] = seed;
      std::mt19937_64 rng(seed);
      std::uniform_int_distribution<int> pick(0, 3);
      for (std::size_t i = 0; i < d; ++i) {
        std::string s;
        for (std::size_t j = 0; j < len; ++j) s.push_back("ACGT"[pick(rng)]);
        ps.sequences.push_back(std::move(s));
      }
    }
    if (spec.contains("names")) ps.names = as_strings(spec["names"], "env.names");
    if (spec.contains("scale")) ps.scale = as_double(spec["scale"], "env.scale");
    echo["scale"] = ps.scale;
    try {
      env = build_phylo_env(ps, parse_limits(spec));
    } catch (const Error& e) {
      fail(e.code() == ErrorCode::kInvalidArgument ? ErrorCode::kParse : e.code(), std::string("env: ") + e.what());
    }
  } else {
    bad("env.kind", "unknown environment kind '" + kind + "'");
  }
  env.config_echo = echo.dump();
  return env;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["objective"] = to_string(c.objective);
  j["param_mode"] = to_string(c.resolved_mode());
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["epsilon_start"] = c.epsilon_start;
  j["epsilon_end"] = c.epsilon_end;
  j["epsilon_decay_fraction"] = c.epsilon_decay_fraction;
  j["target_update_period"] = c.target_update_period;
  j["buffer_capacity"] = c.buffer_capacity;
  j["seed"] = c.seed;
  j["eval_interval"] = c.eval_interval;
  j["onpolicy_fraction"] = c.onpolicy_fraction;
  j["init"] = to_string(c.init);
  j["init_scale"] = c.init_scale;
  j["optimizer"] = to_string(c.optimizer);
  if (c.optimizer == OptimizerKind::kAdam) {
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
  }
  j["subtrajectories"] = c.pcl_all_subtrajectories ? "all" : "complete";
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  check_keys(j, {"objective", "param_mode", "iterations", "batch_size", "learning_rate", "epsilon_start",
                 "epsilon_end", "epsilon_decay_fraction", "target_update_period", "buffer_capacity", "seed",
                 "eval_interval", "onpolicy_fraction", "init", "init_scale", "optimizer", "adam_beta1", "adam_beta2",
                 "adam_eps", "subtrajectories"},
             "train");
  TrainConfig c;
  if (j.contains("objective")) {
    const auto k = parse_objective_kind(as_string(j["objective"], "train.objective"));
    if (!k) bad("train.objective", "unknown objective '" + j["objective"].get<std::string>() + "'");
    c.objective = *k;
  }
  if (j.contains("param_mode")) {
    const auto m = parse_param_mode(as_string(j["param_mode"], "train.param_mode"));
    if (!m) bad("train.param_mode", "unknown mode");
    c.param_mode = *m;
  }
  if (j.contains("iterations")) c.iterations = as_size(j["iterations"], "train.iterations");
  if (j.contains("batch_size")) c.batch_size = as_size(j["batch_size"], "train.batch_size");
  if (j.contains("learning_rate")) c.learning_rate = as_double(j["learning_rate"], "train.learning_rate");
  if (j.contains("epsilon_start")) c.epsilon_start = as_double(j["epsilon_start"], "train.epsilon_start");
  if (j.contains("epsilon_end")) c.epsilon_end = as_double(j["epsilon_end"], "train.epsilon_end");
  if (j.contains("epsilon_decay_fraction"))
    c.epsilon_decay_fraction = as_double(j["epsilon_decay_fraction"], "train.epsilon_decay_fraction");
  if (j.contains("target_update_period"))
    c.target_update_period = as_size(j["target_update_period"], "train.target_update_period");
  if (j.contains("buffer_capacity")) c.buffer_capacity = as_size(j["buffer_capacity"], "train.buffer_capacity");
  if (j.contains("seed")) c.seed = as_u64(j["seed"], "train.seed");
  if (j.contains("eval_interval")) c.eval_interval = as_size(j["eval_interval"], "train.eval_interval");
  if (j.contains("onpolicy_fraction")) c.onpolicy_fraction = as_double(j["onpolicy_fraction"], "train.onpolicy_fraction");
  if (j.contains("init")) {
    const auto s = as_string(j["init"], "train.init");
    if (s == "zeros") c.init = InitMode::kZeros;
    else if (s == "small_normal") c.init = InitMode::kSmallNormal;
    else bad("train.init", "expected 'zeros' or 'small_normal'");
  }
  if (j.contains("init_scale")) c.init_scale = as_double(j["init_scale"], "train.init_scale");
  if (j.contains("optimizer")) {
    const auto s = as_string(j["optimizer"], "train.optimizer");
    if (s == "sgd") c.optimizer = OptimizerKind::kSgd;
    else if (s == "adam") c.optimizer = OptimizerKind::kAdam;
    else bad("train.optimizer", "expected 'sgd' or 'adam'");
  }
  if (j.contains("adam_beta1")) c.adam_beta1 = as_double(j["adam_beta1"], "train.adam_beta1");
  if (j.contains("adam_beta2")) c.adam_beta2 = as_double(j["adam_beta2"], "train.adam_beta2");
  if (j.contains("adam_eps")) c.adam_eps = as_double(j["adam_eps"], "train.adam_eps");
  if (j.contains("subtrajectories")) {
    const auto s = as_string(j["subtrajectories"], "train.subtrajectories");
    if (s == "all") c.pcl_all_subtrajectories = true;
    else if (s == "complete") c.pcl_all_subtrajectories = false;
    else bad("train.subtrajectories", "expected 'complete' or 'all'");
  }
  try {
    validate(c);
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return c;
}

ExperimentConfig parse_experiment(const Json& doc, const std::string& base_dir) {
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  if (!doc.is_object()) bad("config", "expected a JSON object");
  if (!doc.contains("env")) {
    cfg.env = doc;  // bare env spec or raw graph
    return cfg;
  }
  check_keys(doc, {"env", "reward", "train", "output_dir"}, "config");
  cfg.env = doc["env"];
  if (doc.contains("reward")) {
    const Json& r = doc["reward"];
    check_keys(r, {"kind", "backward", "alpha"}, "reward");
    if (r.contains("kind")) {
      const auto k = parse_reward_kind(as_string(r["kind"], "reward.kind"));
      if (!k) bad("reward.kind", "expected uncorrected, terminal, dense or fl");
      cfg.reward.kind = *k;
    }
    if (r.contains("backward")) {
      const auto b = parse_backward_kind(as_string(r["backward"], "reward.backward"));
      if (!b) bad("reward.backward", "expected uniform or counting");
      cfg.reward.backward = *b;
    }
    if (r.contains("alpha")) {
      cfg.reward.alpha = as_double(r["alpha"], "reward.alpha");
      if (cfg.reward.alpha <= 0.0) bad("reward.alpha", "must be positive");
    }
  }
  if (doc.contains("train")) cfg.train = train_config_from_json(doc["train"]);
  if (doc.contains("output_dir")) cfg.output_dir = as_string(doc["output_dir"], "output_dir");
  return cfg;
}

ExperimentConfig load_experiment_file(const std::string& path) {
  const Json doc = read_json_file(path);
  const fs::path parent = fs::path(path).parent_path();
  return parse_experiment(doc, parent.empty() ? std::string(".") : parent.string());
}

void set_experiment_option(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto number = [&](const std::string& k) {
    try {
      std::size_t used = 0;
      const double x = std::stod(value, &used);
      if (used != value.size() || !std::isfinite(x)) throw std::invalid_argument(k);
      return x;
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "--" + k + " expects a number, got '" + value + "'");
    }
  };
  auto count = [&](const std::string& k) -> std::uint64_t {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
      fail(ErrorCode::kInvalidArgument, "--" + k + " expects a nonnegative integer, got '" + value + "'");
    try {
      return std::stoull(value);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "--" + k + " is out of range");
    }
  };
  auto train = [&]() -> TrainConfig& {
    if (!cfg.train) cfg.train = TrainConfig{};
    return *cfg.train;
  };
  if (key == "alpha") {
    const double a = number(key);
    require(a > 0.0, ErrorCode::kInvalidArgument, "--alpha must be positive");
    cfg.reward.alpha = a;
  } else if (key == "reward") {
    const auto k = parse_reward_kind(value);
    require(k.has_value(), ErrorCode::kInvalidArgument, "--reward expects uncorrected, terminal, dense or fl");
    cfg.reward.kind = *k;
  } else if (key == "backward") {
    const auto b = parse_backward_kind(value);
    require(b.has_value(), ErrorCode::kInvalidArgument, "--backward expects uniform or counting");
    cfg.reward.backward = *b;
  } else if (key == "objective") {
    const auto k = parse_objective_kind(value);
    require(k.has_value(), ErrorCode::kInvalidArgument, "--objective: unknown objective '" + value + "'");
    train().objective = *k;
    train().param_mode.reset();
  } else if (key == "seed") {
    train().seed = count(key);
  } else if (key == "iterations") {
    train().iterations = count(key);
  } else if (key == "learning_rate") {
    train().learning_rate = number(key);
  } else if (key == "output_dir") {
    cfg.output_dir = value;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown option '" + key + "'");
  }
  if (cfg.train) validate(*cfg.train);
}

Json config_echo(const ExperimentConfig& cfg) {
  Json j;
  const Environment env = load_environment(cfg.env, cfg.base_dir);
  j["env"] = Json::parse(env.config_echo);
  j["reward"] = {{"kind", to_string(cfg.reward.kind)},
                 {"backward", to_string(cfg.reward.backward)},
                 {"alpha", cfg.reward.alpha}};
  if (cfg.train) j["train"] = train_config_to_json(*cfg.train);
  j["output_dir"] = cfg.output_dir;
  return j;
}

Json graph_to_json(const SoftMdpGraph& g) {
  Json j;
  j["num_states"] = g.num_states();
  j["initial_state"] = g.initial_state();
  Json edges = Json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  Json term = Json::array(), labels = Json::array();
  for (StateId s = 0; s < g.num_states(); ++s) {
    term.push_back(static_cast<bool>(g.terminating(s)));
    labels.push_back(g.label(s));
  }
  j["terminating"] = std::move(term);
  j["labels"] = std::move(labels);
  return j;
}

Json params_to_json(const SoftMdpGraph& g, const TabularParams& p, double alpha) {
  Json j;
  j["mode"] = to_string(p.mode);
  j["alpha"] = alpha;
  const ParamView view(g, p, alpha);
  Json states = Json::array();
  for (StateId s = 0; s < g.num_states(); ++s) {
    Json row;
    row["state"] = s;
    row["label"] = g.label(s);
    Json actions = Json::array(), log_pf = Json::array();
    for (std::size_t a = 0; a < g.num_actions(s); ++a) {
      const StateId t = g.action_target(s, a);
      if (t == kSink) actions.push_back("sink");
      else actions.push_back(t);
      log_pf.push_back(view.log_pf(s, a));
    }
    row["actions"] = std::move(actions);
    const std::size_t off = g.action_offset(s), k = g.num_actions(s);
    if (p.has_logits())
      row["logits"] = std::vector<double>(p.policy_logits.begin() + off, p.policy_logits.begin() + off + k);
    if (p.has_q()) row["q"] = std::vector<double>(p.q_values.begin() + off, p.q_values.begin() + off + k);
    if (p.has_flow()) row[p.mode == ParamMode::kPolicyValue ? "value" : "log_flow"] = p.log_flow[s];
    row["log_pf"] = std::move(log_pf);
    states.push_back(std::move(row));
  }
  j["states"] = std::move(states);
  return j;
}

RewardScheme make_scheme(const Environment& env, const RewardSpec& spec) {
  return RewardScheme(env.graph, env.energy, spec.kind, make_backward_policy(env.graph, spec.backward), spec.alpha);
}

}  // namespace softdag
