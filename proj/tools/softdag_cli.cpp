// softdag command-line tool. Talks to the library only through softdag.h.

#include <CLI11.hpp>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "softdag/softdag.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;  // violated identity, diverged run, invalid graph
constexpr int kExitUsage = 2;   // usage, parse, io, limit, precondition

int exit_code(softdag_status s) {
  if (s == SOFTDAG_OK) return kExitOk;
  if (s == SOFTDAG_VIOLATION || s == SOFTDAG_DIVERGED) return kExitFailed;
  return kExitUsage;
}

int report(softdag_status s, const std::string& context) {
  std::cerr << "softdag: " << context << ": " << softdag_last_error() << " [" << softdag_status_name(s) << "]\n";
  return exit_code(s);
}

// Owns a char* handed out by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { softdag_free_string(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ExperimentHandle {
  softdag_experiment* p = nullptr;
  ~ExperimentHandle() { softdag_experiment_free(p); }
};

struct EnvHandle {
  softdag_env* p = nullptr;
  ~EnvHandle() { softdag_env_free(p); }
};

bool write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) {
    std::cerr << "softdag: cannot write '" << path.string() << "'\n";
    return false;
  }
  return true;
}

bool ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "softdag: cannot create '" << dir.string() << "': " << ec.message() << "\n";
    return false;
  }
  return true;
}

struct Overrides {
  std::optional<std::string> seed, alpha, reward, backward, objective, iterations, learning_rate;
};

softdag_status apply(softdag_experiment* exp, const Overrides& o) {
  const std::pair<const char*, const std::optional<std::string>*> items[] = {
      {"reward", &o.reward},       {"backward", &o.backward},     {"alpha", &o.alpha},
      {"objective", &o.objective}, {"iterations", &o.iterations}, {"learning_rate", &o.learning_rate},
      {"seed", &o.seed}};
  for (const auto& [key, value] : items) {
    if (!*value) continue;
    const softdag_status s = softdag_experiment_set(exp, key, (*value)->c_str());
    if (s != SOFTDAG_OK) return s;
  }
  return SOFTDAG_OK;
}

// ---------------------------------------------------------------------------

int cmd_exact(const std::string& config, const Overrides& o, const std::string& out_dir) {
  ExperimentHandle exp;
  if (auto s = softdag_experiment_load_file(config.c_str(), &exp.p); s != SOFTDAG_OK) return report(s, config);
  if (auto s = apply(exp.p, o); s != SOFTDAG_OK) return report(s, "options");
  LibString summary, csv;
  if (auto s = softdag_experiment_exact(exp.p, &summary.p, &csv.p); s != SOFTDAG_OK) return report(s, "exact");

  // The summary is small and flat; pull the headline numbers out of it textually.
  auto field = [&](const std::string& key) {
    const std::string text = summary.str();
    const auto at = text.find("\"" + key + "\":");
    if (at == std::string::npos) return std::string("?");
    auto start = at + key.size() + 3;
    while (start < text.size() && text[start] == ' ') ++start;
    const auto end = text.find_first_of(",\n}", start);
    return text.substr(start, end - start);
  };
  std::cout << "jsd " << field("jsd") << "\n"
            << "log_z_oracle " << field("log_z_oracle") << "\n"
            << "log_z_gibbs " << field("log_z_gibbs") << "\n"
            << "biased " << field("biased") << "\n\n"
            << csv.str();
  if (!out_dir.empty()) {
    if (!ensure_dir(out_dir)) return kExitUsage;
    if (!write_file(fs::path(out_dir) / "distribution.csv", csv.str())) return kExitUsage;
    if (!write_file(fs::path(out_dir) / "summary.json", summary.str() + "\n")) return kExitUsage;
  }
  return kExitOk;
}

struct SeedOutcome {
  softdag_status status = SOFTDAG_OK;
  std::string error;
  std::string dir;
  std::string metrics, params, manifest;
};

SeedOutcome train_one(const std::string& config, const Overrides& o, std::optional<std::uint64_t> seed) {
  SeedOutcome r;
  ExperimentHandle exp;
  auto failed = [&](softdag_status s) {
    r.status = s;
    r.error = softdag_last_error();
    return r;
  };
  if (auto s = softdag_experiment_load_file(config.c_str(), &exp.p); s != SOFTDAG_OK) return failed(s);
  if (auto s = apply(exp.p, o); s != SOFTDAG_OK) return failed(s);
  if (seed) {
    if (auto s = softdag_experiment_set(exp.p, "seed", std::to_string(*seed).c_str()); s != SOFTDAG_OK)
      return failed(s);
  }
  softdag_train_outputs out{};
  const softdag_status s = softdag_train(exp.p, &out);
  r.status = s;
  if (s != SOFTDAG_OK) r.error = softdag_last_error();
  if (out.metrics_csv) r.metrics = out.metrics_csv;
  if (out.params_json) r.params = out.params_json;
  if (out.manifest_json) r.manifest = out.manifest_json;
  softdag_train_outputs_free(&out);
  return r;
}

int cmd_train(const std::string& config, const Overrides& o, std::string out_dir, int jobs, int num_seeds) {
  if (jobs < 1 || num_seeds < 1) {
    std::cerr << "softdag: --jobs and --num-seeds must be positive\n";
    return kExitUsage;
  }
  std::uint64_t base_seed = 0;
  {
    ExperimentHandle exp;
    if (auto s = softdag_experiment_load_file(config.c_str(), &exp.p); s != SOFTDAG_OK) return report(s, config);
    if (auto s = apply(exp.p, o); s != SOFTDAG_OK) return report(s, "options");
    LibString v;
    if (auto s = softdag_experiment_get(exp.p, "seed", &v.p); s != SOFTDAG_OK) return report(s, config);
    base_seed = std::stoull(v.str());
    if (out_dir.empty()) {
      LibString d;
      if (auto s = softdag_experiment_get(exp.p, "output_dir", &d.p); s != SOFTDAG_OK) return report(s, config);
      out_dir = d.str();
    }
  }

  std::vector<SeedOutcome> outcomes(static_cast<std::size_t>(num_seeds));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i; (i = next.fetch_add(1)) < num_seeds;) {
      const std::optional<std::uint64_t> seed =
          num_seeds > 1 ? std::optional<std::uint64_t>(base_seed + static_cast<std::uint64_t>(i)) : std::nullopt;
      outcomes[static_cast<std::size_t>(i)] = train_one(config, o, seed);
      outcomes[static_cast<std::size_t>(i)].dir =
          num_seeds > 1 ? (fs::path(out_dir) / ("seed_" + std::to_string(base_seed + i))).string() : out_dir;
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::min(jobs, num_seeds); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int code = kExitOk;
  for (const auto& r : outcomes) {
    const bool have_outputs = r.status == SOFTDAG_OK || r.status == SOFTDAG_DIVERGED;
    if (have_outputs) {
      if (!ensure_dir(r.dir) || !write_file(fs::path(r.dir) / "metrics.csv", r.metrics) ||
          !write_file(fs::path(r.dir) / "params.json", r.params) ||
          !write_file(fs::path(r.dir) / "manifest.json", r.manifest))
        return kExitUsage;
      std::cout << r.dir << (r.status == SOFTDAG_OK ? ": ok" : ": diverged (" + r.error + ")") << "\n";
    } else {
      std::cerr << "softdag: train: " << r.error << " [" << softdag_status_name(r.status) << "]\n";
    }
    code = std::max(code, exit_code(r.status));
  }
  return code;
}

int cmd_equiv(const std::string& config, const Overrides& o, const std::string& pair,
              const std::vector<double>& alphas, int trials, double tol, double ratio_tol, std::uint64_t seed,
              const std::string& out_dir) {
  ExperimentHandle exp;
  if (auto s = softdag_experiment_load_file(config.c_str(), &exp.p); s != SOFTDAG_OK) return report(s, config);
  EnvHandle env;
  if (auto s = softdag_experiment_env(exp.p, &env.p); s != SOFTDAG_OK) return report(s, config);
  std::vector<double> use = alphas;
  if (use.empty()) {
    LibString a;
    if (auto s = softdag_experiment_get(exp.p, "alpha", &a.p); s != SOFTDAG_OK) return report(s, config);
    use.push_back(std::stod(a.str()));
  }
  softdag_equiv_options opts{};
  opts.pair = pair.c_str();
  opts.reward = o.reward ? o.reward->c_str() : nullptr;
  opts.backward = o.backward ? o.backward->c_str() : nullptr;
  opts.alphas = use.data();
  opts.n_alphas = use.size();
  opts.trials = trials;
  opts.tol = tol;
  opts.ratio_tol = ratio_tol;
  opts.seed = seed;
  int passed = 0;
  LibString rep;
  if (auto s = softdag_equiv(env.p, &opts, &passed, &rep.p); s != SOFTDAG_OK) return report(s, "equiv");
  std::cout << rep.str() << "\n";
  if (!out_dir.empty()) {
    if (!ensure_dir(out_dir) || !write_file(fs::path(out_dir) / "equiv.json", rep.str() + "\n")) return kExitUsage;
  }
  return passed ? kExitOk : kExitFailed;
}

int cmd_validate(const std::string& config) {
  EnvHandle env;
  if (auto s = softdag_env_load_file(config.c_str(), &env.p); s != SOFTDAG_OK) return report(s, config);
  int valid = 0;
  LibString rep;
  if (auto s = softdag_env_validate(env.p, &valid, &rep.p); s != SOFTDAG_OK) return report(s, "validate");
  std::cout << rep.str() << "\n";
  return valid ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact oracles, equivalence checks and tabular training on DAG-structured soft MDPs"};
  app.set_version_flag("--version", std::string(softdag_version()));
  app.require_subcommand(1);

  std::string config, out_dir, pair = "all";
  Overrides o;
  int jobs = 1, num_seeds = 1, trials = 100;
  double tol = 1e-9, ratio_tol = 1e-8;
  std::uint64_t equiv_seed = 0;
  std::vector<double> alphas;

  auto add_env = [&](CLI::App* sub) {
    sub->add_option("--env,--config", config, "Experiment, environment or graph JSON")->required();
  };
  auto add_scheme = [&](CLI::App* sub) {
    sub->add_option("--reward", o.reward, "uncorrected | terminal | dense | fl");
    sub->add_option("--backward", o.backward, "uniform | counting");
  };

  CLI::App* exact = app.add_subcommand("exact", "Exact optimal terminating distribution vs the Gibbs target");
  add_env(exact);
  add_scheme(exact);
  exact->add_option("--alpha", o.alpha, "Temperature");
  exact->add_option("--out", out_dir, "Write distribution.csv and summary.json here");

  CLI::App* train = app.add_subcommand("train", "Train tabular parameters");
  add_env(train);
  add_scheme(train);
  train->add_option("--alpha", o.alpha, "Temperature");
  train->add_option("--objective", o.objective, "pcl | subtb | tb | db | sql | fldb | mdb | pisql | sac");
  train->add_option("--seed", o.seed, "Training seed");
  train->add_option("--iterations", o.iterations, "Override train.iterations");
  train->add_option("--learning-rate", o.learning_rate, "Override train.learning_rate");
  train->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  train->add_option("--jobs", jobs, "Worker threads for --num-seeds")->check(CLI::PositiveNumber);
  train->add_option("--num-seeds", num_seeds, "Independent seeds seed, seed+1, ...")->check(CLI::PositiveNumber);

  CLI::App* equiv = app.add_subcommand("equiv", "Certify RL/GFlowNet residual proportionality");
  add_env(equiv);
  add_scheme(equiv);
  equiv->add_option("--pair", pair, "pcl-subtb | sql-db | pisql-mdb | sql-fldb | all");
  equiv->add_option("--alpha", alphas, "Temperature(s); repeat or comma-separate")->delimiter(',');
  equiv->add_option("--trials", trials, "Random parameter draws per pair and alpha")->check(CLI::PositiveNumber);
  equiv->add_option("--tol", tol, "Residual identity tolerance")->check(CLI::NonNegativeNumber);
  equiv->add_option("--ratio-tol", ratio_tol, "Loss ratio tolerance (relative)")->check(CLI::NonNegativeNumber);
  equiv->add_option("--seed", equiv_seed, "Seed for parameter draws");
  equiv->add_option("--out", out_dir, "Also write equiv.json here");

  CLI::App* validate = app.add_subcommand("validate", "Check DAG invariants of an environment");
  validate->alias("check");
  add_env(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (exact->parsed()) return cmd_exact(config, o, out_dir);
    if (train->parsed()) return cmd_train(config, o, out_dir, jobs, num_seeds);
    if (equiv->parsed())
      return cmd_equiv(config, o, pair, alphas, trials, tol, ratio_tol, equiv_seed, out_dir);
    if (validate->parsed()) return cmd_validate(config);
  } catch (const std::exception& e) {
    std::cerr << "softdag: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
