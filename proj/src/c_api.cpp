#include "softdag/softdag.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "softdag/config.hpp"
#include "softdag/error.hpp"
#include "softdag/harness.hpp"

struct softdag_env {
  softdag::Environment env;
};

struct softdag_experiment {
  softdag::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

softdag_status to_status(softdag::ErrorCode code) {
  using softdag::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return SOFTDAG_INVALID_ARGUMENT;
    case ErrorCode::kParse: return SOFTDAG_PARSE;
    case ErrorCode::kIo: return SOFTDAG_IO;
    case ErrorCode::kLimit: return SOFTDAG_LIMIT;
    case ErrorCode::kPrecondition: return SOFTDAG_PRECONDITION;
    case ErrorCode::kViolation: return SOFTDAG_VIOLATION;
    case ErrorCode::kDiverged: return SOFTDAG_DIVERGED;
  }
  return SOFTDAG_INTERNAL;
}

template <typename F>
softdag_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const softdag::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SOFTDAG_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SOFTDAG_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SOFTDAG_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(bool cond, const char* what) {
  if (!cond) softdag::fail(softdag::ErrorCode::kInvalidArgument, what);
}

softdag::RewardSpec scheme_spec(const softdag_scheme_options* o) {
  softdag::RewardSpec spec;
  if (!o) return spec;
  if (o->reward) {
    const auto k = softdag::parse_reward_kind(o->reward);
    need(k.has_value(), "reward must be uncorrected, terminal, dense or fl");
    spec.kind = *k;
  }
  if (o->backward) {
    const auto b = softdag::parse_backward_kind(o->backward);
    need(b.has_value(), "backward must be uniform or counting");
    spec.backward = *b;
  }
  need(o->alpha > 0.0, "alpha must be positive");
  spec.alpha = o->alpha;
  return spec;
}

softdag::Json parse_text(const char* json) {
  try {
    return softdag::Json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    softdag::fail(softdag::ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
  }
}

softdag::Environment env_from_doc(const softdag::Json& doc, const std::string& base_dir) {
  const softdag::ExperimentConfig cfg = softdag::parse_experiment(doc, base_dir);
  return softdag::load_environment(cfg.env, cfg.base_dir);
}

std::string parent_dir(const char* path) {
  const auto p = std::filesystem::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

}  // namespace

extern "C" {

const char* softdag_version(void) { return softdag::library_version(); }

const char* softdag_status_name(softdag_status status) {
  switch (status) {
    case SOFTDAG_OK: return "ok";
    case SOFTDAG_INVALID_ARGUMENT: return "invalid_argument";
    case SOFTDAG_PARSE: return "parse";
    case SOFTDAG_IO: return "io";
    case SOFTDAG_LIMIT: return "limit";
    case SOFTDAG_PRECONDITION: return "precondition";
    case SOFTDAG_VIOLATION: return "violation";
    case SOFTDAG_DIVERGED: return "diverged";
    case SOFTDAG_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* softdag_last_error(void) { return g_last_error.c_str(); }

void softdag_free_string(char* s) { std::free(s); }

softdag_status softdag_env_load_file(const char* path, softdag_env** out) {
  return guarded([&] {
    need(path && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<softdag_env>();
    h->env = env_from_doc(softdag::read_json_file(path), parent_dir(path));
    *out = h.release();
    return SOFTDAG_OK;
  });
}

softdag_status softdag_env_load_json(const char* json, const char* base_dir, softdag_env** out) {
  return guarded([&] {
    need(json && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<softdag_env>();
    h->env = env_from_doc(parse_text(json), base_dir ? base_dir : ".");
    *out = h.release();
    return SOFTDAG_OK;
  });
}

void softdag_env_free(softdag_env* env) { delete env; }

size_t softdag_env_num_states(const softdag_env* env) { return env ? env->env.graph.num_states() : 0; }

size_t softdag_env_num_terminating(const softdag_env* env) {
  return env ? env->env.graph.terminating_states().size() : 0;
}

softdag_status softdag_env_validate(const softdag_env* env, int* is_valid, char** report_json) {
  return guarded([&] {
    need(env && is_valid, "null argument");
    const auto rep = softdag::validate_dag(env->env.graph);
    *is_valid = rep.is_valid ? 1 : 0;
    if (report_json) {
      softdag::Json j;
      j["is_valid"] = rep.is_valid;
      j["num_states"] = env->env.graph.num_states();
      j["num_edges"] = env->env.graph.num_edges();
      j["num_terminating"] = env->env.graph.terminating_states().size();
      softdag::Json vs = softdag::Json::array();
      for (const auto& v : rep.violations) {
        softdag::Json e{{"kind", softdag::to_string(v.kind)}, {"state", v.state}};
        if (v.other != softdag::kSink) e["other"] = v.other;
        vs.push_back(std::move(e));
      }
      j["violations"] = std::move(vs);
      *report_json = dup_string(j.dump(1));
    }
    return SOFTDAG_OK;
  });
}

softdag_status softdag_env_graph_json(const softdag_env* env, char** out) {
  return guarded([&] {
    need(env && out, "null argument");
    *out = dup_string(softdag::graph_to_json(env->env.graph).dump());
    return SOFTDAG_OK;
  });
}

softdag_status softdag_exact(const softdag_env* env, const softdag_scheme_options* scheme, char** summary_json,
                             char** distribution_csv) {
  return guarded([&] {
    need(env && scheme && summary_json && distribution_csv, "null argument");
    const auto r = softdag::run_exact(env->env, scheme_spec(scheme));
    *summary_json = dup_string(r.summary.dump(1));
    *distribution_csv = dup_string(r.distribution_csv);
    return SOFTDAG_OK;
  });
}

softdag_status softdag_equiv(const softdag_env* env, const softdag_equiv_options* o, int* passed,
                             char** report_json) {
  return guarded([&] {
    need(env && o && passed && report_json, "null argument");
    need(o->n_alphas == 0 || o->alphas, "alphas is null");
    softdag::EquivOptions opts;
    if (o->pair && std::string(o->pair) != "all") {
      const auto p = softdag::parse_equivalence_pair(o->pair);
      need(p.has_value(), "pair must be pcl-subtb, sql-db, pisql-mdb, sql-fldb or all");
      opts.pairs.push_back(*p);
    }
    if (o->reward) {
      const auto k = softdag::parse_reward_kind(o->reward);
      need(k.has_value(), "reward must be uncorrected, terminal, dense or fl");
      opts.reward = *k;
    }
    if (o->backward) {
      const auto b = softdag::parse_backward_kind(o->backward);
      need(b.has_value(), "backward must be uniform or counting");
      opts.backward = *b;
    }
    for (size_t i = 0; i < o->n_alphas; ++i) {
      need(o->alphas[i] > 0.0, "alpha must be positive");
      opts.alphas.push_back(o->alphas[i]);
    }
    if (opts.alphas.empty()) opts.alphas.push_back(1.0);
    need(o->trials > 0, "trials must be positive");
    need(o->tol >= 0.0 && o->ratio_tol >= 0.0, "tolerances must be nonnegative");
    opts.trials = o->trials;
    opts.tol = o->tol;
    opts.ratio_tol = o->ratio_tol;
    opts.seed = o->seed;
    const auto r = softdag::run_equiv(env->env, opts);
    *passed = r.passed ? 1 : 0;
    *report_json = dup_string(r.report.dump(1));
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_load_file(const char* path, softdag_experiment** out) {
  return guarded([&] {
    need(path && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<softdag_experiment>();
    h->cfg = softdag::load_experiment_file(path);
    *out = h.release();
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_load_json(const char* json, const char* base_dir, softdag_experiment** out) {
  return guarded([&] {
    need(json && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<softdag_experiment>();
    h->cfg = softdag::parse_experiment(parse_text(json), base_dir ? base_dir : ".");
    *out = h.release();
    return SOFTDAG_OK;
  });
}

void softdag_experiment_free(softdag_experiment* exp) { delete exp; }

softdag_status softdag_experiment_set(softdag_experiment* exp, const char* key, const char* value) {
  return guarded([&] {
    need(exp && key && value, "null argument");
    softdag::ExperimentConfig copy = exp->cfg;
    softdag::set_experiment_option(copy, key, value);
    exp->cfg = std::move(copy);
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_get(const softdag_experiment* exp, const char* key, char** value) {
  return guarded([&] {
    need(exp && key && value, "null argument");
    const auto& c = exp->cfg;
    const std::string k = key;
    std::string v;
    if (k == "output_dir") v = c.output_dir;
    else if (k == "alpha") v = softdag::format_double(c.reward.alpha);
    else if (k == "reward") v = softdag::to_string(c.reward.kind);
    else if (k == "backward") v = softdag::to_string(c.reward.backward);
    else if (k == "seed" && c.train) v = std::to_string(c.train->seed);
    else if (k == "objective" && c.train) v = softdag::to_string(c.train->objective);
    else if (k == "seed" || k == "objective") softdag::fail(softdag::ErrorCode::kPrecondition, "config has no 'train' section");
    else softdag::fail(softdag::ErrorCode::kInvalidArgument, "unknown key '" + k + "'");
    *value = dup_string(v);
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_env(const softdag_experiment* exp, softdag_env** out) {
  return guarded([&] {
    need(exp && out, "null argument");
    *out = nullptr;
    auto h = std::make_unique<softdag_env>();
    h->env = softdag::load_environment(exp->cfg.env, exp->cfg.base_dir);
    *out = h.release();
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_echo(const softdag_experiment* exp, char** out) {
  return guarded([&] {
    need(exp && out, "null argument");
    *out = dup_string(softdag::config_echo(exp->cfg).dump(1));
    return SOFTDAG_OK;
  });
}

softdag_status softdag_experiment_exact(const softdag_experiment* exp, char** summary_json, char** distribution_csv) {
  return guarded([&] {
    need(exp && summary_json && distribution_csv, "null argument");
    const auto env = softdag::load_environment(exp->cfg.env, exp->cfg.base_dir);
    const auto r = softdag::run_exact(env, exp->cfg.reward);
    *summary_json = dup_string(r.summary.dump(1));
    *distribution_csv = dup_string(r.distribution_csv);
    return SOFTDAG_OK;
  });
}

softdag_status softdag_train(const softdag_experiment* exp, softdag_train_outputs* out) {
  return guarded([&] {
    need(exp && out, "null argument");
    *out = softdag_train_outputs{nullptr, nullptr, nullptr, 0};
    const auto a = softdag::run_train(exp->cfg);
    out->metrics_csv = dup_string(a.metrics_csv);
    out->params_json = dup_string(a.params_json);
    out->manifest_json = dup_string(a.manifest_json);
    out->diverged = a.diverged ? 1 : 0;
    if (a.diverged) {
      g_last_error = a.diagnostic;
      return SOFTDAG_DIVERGED;
    }
    return SOFTDAG_OK;
  });
}

void softdag_train_outputs_free(softdag_train_outputs* out) {
  if (!out) return;
  std::free(out->metrics_csv);
  std::free(out->params_json);
  std::free(out->manifest_json);
  *out = softdag_train_outputs{nullptr, nullptr, nullptr, 0};
}

}  // extern "C"
