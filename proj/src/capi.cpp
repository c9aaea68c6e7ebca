#include "stgormer/stgormer.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <sstream>

#include "stgormer/checkpoint.hpp"
#include "stgormer/config.hpp"
#include "stgormer/data.hpp"
#include "stgormer/graph.hpp"
#include "stgormer/io_util.hpp"
#include "stgormer/model.hpp"
#include "stgormer/study.hpp"
#include "stgormer/train.hpp"

struct stg_config {
  stg::RunConfig cfg;
};

struct stg_dataset {
  stg::FlowDataset ds;
};

struct stg_graph {
  stg::SpatioTemporalGraph g;
};

struct stg_model {
  stg::RunConfig cfg;
  stg::StgormerModel model;
  std::optional<stg::PreparedData> prepared;  // windows of the last dataset evaluated
  const stg_dataset* prepared_for = nullptr;
};

namespace {

thread_local std::string g_last_error;

stg_status fail(stg_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
stg_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return STG_OK;
  } catch (const stg::NumericalError& e) {
    return fail(STG_ERR_NUMERICAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(STG_ERR_INTERNAL, "out of memory");
  } catch (const std::logic_error& e) {
    // invalid_argument, out_of_range and the library's own precondition errors
    return fail(STG_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return fail(STG_ERR_DATA, e.what());
  } catch (...) {
    return fail(STG_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> to_vector(const char* const* items, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(items[i]);
  return out;
}

#define STG_REQUIRE(cond, what) \
  if (!(cond)) return fail(STG_ERR_USAGE, what)

const stg::PreparedData& prepared_for(stg_model* m, const stg_dataset* ds) {
  if (!m->prepared || m->prepared_for != ds) {
    m->prepared = stg::prepare(ds->ds, m->cfg);
    m->prepared_for = ds;
  }
  return *m->prepared;
}

}  // namespace

extern "C" {

const char* stg_last_error(void) { return g_last_error.c_str(); }

const char* stg_version(void) { return "0.1.0"; }

void stg_string_free(char* s) { std::free(s); }

stg_status stg_config_load(const char* path, const char* const* overrides, size_t n_overrides, stg_config** out) {
  STG_REQUIRE(out, "stg_config_load: out is NULL");
  STG_REQUIRE(overrides || n_overrides == 0, "stg_config_load: overrides is NULL");
  return guarded([&] {
    auto ov = to_vector(overrides, n_overrides);
    auto cfg = path ? stg::load_run_config(path, ov) : stg::parse_run_config("", ov);
    *out = new stg_config{std::move(cfg)};
  });
}

void stg_config_free(stg_config* cfg) { delete cfg; }

stg_status stg_config_text(const stg_config* cfg, char** out) {
  STG_REQUIRE(cfg && out, "stg_config_text: NULL argument");
  return guarded([&] { *out = copy_string(stg::to_text(cfg->cfg)); });
}

stg_status stg_config_reference(char** out) {
  STG_REQUIRE(out, "stg_config_reference: out is NULL");
  return guarded([&] {
    stg::RunConfig defaults;
    std::string text;
    for (const auto& f : stg::config_fields(defaults)) text += f.key + "\t" + f.get() + "\t" + f.help + "\n";
    *out = copy_string(text);
  });
}

stg_status stg_synthesize(const char* spec_path, const char* const* overrides, size_t n_overrides,
                          const char* out_dir) {
  STG_REQUIRE(out_dir, "stg_synthesize: out_dir is NULL");
  STG_REQUIRE(overrides || n_overrides == 0, "stg_synthesize: overrides is NULL");
  return guarded([&] {
    std::string text;
    if (spec_path) {
      if (!std::filesystem::exists(spec_path)) throw std::runtime_error(std::string("spec file not found: ") + spec_path);
      text = stg::detail::read_text_file(spec_path);
    }
    for (std::size_t i = 0; i < n_overrides; ++i) {
      std::string o = overrides[i];
      auto eq = o.find('=');
      if (eq == std::string::npos) throw stg::ConfigError({"override '" + o + "' is not key=value"});
      std::string key = o.substr(0, eq);
      if (key.find('.') == std::string::npos) key = "synth." + key;
      text += "\n" + key + " = " + o.substr(eq + 1);
    }
    auto spec = stg::parse_synthetic_spec(text);
    auto data = stg::synthesize(spec);
    const std::filesystem::path dir(out_dir);
    stg::save_dataset_dir(dir, data.graph, data.dataset);
    stg::detail::write_text_file(dir / stg::DataLayout::spec, stg::to_text(spec));
  });
}

stg_status stg_synth_reference(char** out) {
  STG_REQUIRE(out, "stg_synth_reference: out is NULL");
  return guarded([&] { *out = copy_string(stg::to_text(stg::SyntheticSpec{})); });
}

stg_status stg_graph_load(const char* path, stg_graph** out) {
  STG_REQUIRE(path && out, "stg_graph_load: NULL argument");
  return guarded([&] { *out = new stg_graph{stg::load_graph(path)}; });
}

void stg_graph_free(stg_graph* g) { delete g; }

size_t stg_graph_num_nodes(const stg_graph* g) { return g ? static_cast<size_t>(g->g.num_nodes()) : 0; }

stg_status stg_graph_degrees(const stg_graph* g, int* indegree, int* outdegree) {
  STG_REQUIRE(g && indegree && outdegree, "stg_graph_degrees: NULL argument");
  return guarded([&] {
    auto d = stg::degrees(g->g);
    std::copy(d.indegree.begin(), d.indegree.end(), indegree);
    std::copy(d.outdegree.begin(), d.outdegree.end(), outdegree);
  });
}

stg_status stg_graph_spd(const stg_graph* g, int* out) {
  STG_REQUIRE(g && out, "stg_graph_spd: NULL argument");
  return guarded([&] {
    auto spd = stg::shortest_path_matrix(g->g);
    std::copy(spd.values().begin(), spd.values().end(), out);
  });
}

stg_status stg_dataset_load(const char* dir, stg_dataset** out) {
  STG_REQUIRE(dir && out, "stg_dataset_load: NULL argument");
  return guarded([&] { *out = new stg_dataset{stg::load_dataset_dir(dir)}; });
}

void stg_dataset_free(stg_dataset* ds) { delete ds; }

stg_status stg_train(const stg_config* cfg, const stg_dataset* ds, stg_epoch_callback cb, void* user,
                     stg_model** out_model, char** history_jsonl) {
  STG_REQUIRE(cfg && ds && out_model, "stg_train: NULL argument");
  return guarded([&] {
    stg::TrainHooks hooks;
    if (cb)
      hooks.on_epoch_end = [&](const stg::EpochRecord& r, stg::StgormerModel&) {
        return cb(stg::epoch_to_json(r).c_str(), user) != 0;
      };
    auto run = stg::train_model(cfg->cfg, ds->ds, hooks);
    std::string history = stg::history_to_jsonl(run.history);
    auto* m = new stg_model{cfg->cfg, std::move(run.model), std::move(run.data), ds};
    if (history_jsonl) {
      try {
        *history_jsonl = copy_string(history);
      } catch (...) {
        delete m;
        throw;
      }
    }
    *out_model = m;
  });
}

void stg_model_free(stg_model* m) { delete m; }

stg_status stg_model_save(const stg_model* m, const char* path) {
  STG_REQUIRE(m && path, "stg_model_save: NULL argument");
  return guarded([&] { stg::save_checkpoint(path, m->cfg, m->model); });
}

stg_status stg_model_load(const char* path, stg_model** out) {
  STG_REQUIRE(path && out, "stg_model_load: NULL argument");
  return guarded([&] {
    if (!std::filesystem::exists(path)) throw std::runtime_error(std::string("checkpoint not found: ") + path);
    auto loaded = stg::load_checkpoint(path);
    *out = new stg_model{std::move(loaded.config), std::move(loaded.model), std::nullopt, nullptr};
  });
}

stg_status stg_model_config(const stg_model* m, stg_config** out) {
  STG_REQUIRE(m && out, "stg_model_config: NULL argument");
  return guarded([&] { *out = new stg_config{m->cfg}; });
}

stg_status stg_model_parameter_count(const stg_model* m, size_t* out) {
  STG_REQUIRE(m && out, "stg_model_parameter_count: NULL argument");
  *out = m->model.parameters().num_scalars();
  return STG_OK;
}

stg_status stg_model_dims_get(const stg_model* m, stg_model_dims* out) {
  STG_REQUIRE(m && out, "stg_model_dims_get: NULL argument");
  const auto& c = m->model.config();
  *out = {c.t_in, c.t_out, static_cast<size_t>(m->model.graph().num_nodes()), c.channels, c.time_features};
  return STG_OK;
}

stg_status stg_evaluate(stg_model* m, const stg_dataset* ds, const char* split, double threshold, char** report_json) {
  STG_REQUIRE(m && ds && split && report_json, "stg_evaluate: NULL argument");
  const std::string which = split;
  STG_REQUIRE(which == "train" || which == "val" || which == "test",
              "unknown split '" + which + "' (expected train, val or test)");
  return guarded([&] {
    if (*ds->ds.graph != m->model.graph()) {
      throw std::invalid_argument("dataset graph (N=" + std::to_string(ds->ds.graph->num_nodes()) +
                                  ") does not match the checkpoint graph (N=" +
                                  std::to_string(m->model.graph().num_nodes()) + ")");
    }
    const auto& p = prepared_for(m, ds);
    const auto& windows = which == "train" ? p.raw_train : which == "val" ? p.raw_val : p.raw_test;
    *report_json = copy_string(stg::to_json(stg::evaluate(m->model, windows, threshold)));
  });
}

stg_status stg_predict(stg_model* m, const double* window, const double* timestamps, double* out) {
  STG_REQUIRE(m && window && timestamps && out, "stg_predict: NULL argument");
  return guarded([&] {
    const auto& c = m->model.config();
    const auto n = static_cast<std::size_t>(m->model.graph().num_nodes());
    stg::NdArray x(stg::Shape{c.t_in, n, c.channels},
                   std::vector<double>(window, window + c.t_in * n * c.channels));
    stg::NdArray ts(stg::Shape{c.t_in, c.time_features},
                    std::vector<double>(timestamps, timestamps + c.t_in * c.time_features));
    auto y = m->model.predict(x, ts);
    std::copy(y.values().begin(), y.values().end(), out);
  });
}

stg_status stg_model_sa_bias(const stg_model* m, double* out) {
  STG_REQUIRE(m && out, "stg_model_sa_bias: NULL argument");
  return guarded([&] {
    auto b = m->model.realized_spd_bias();
    std::copy(b.values().begin(), b.values().end(), out);
  });
}

stg_status stg_study(const stg_config* cfg, const stg_dataset* ds, const char* axis, char** csv) {
  STG_REQUIRE(cfg && ds && axis && csv, "stg_study: NULL argument");
  auto parsed = stg::parse_study_axis(axis);
  STG_REQUIRE(parsed, std::string("unknown study axis '") + axis + "' (expected ablation, block_count or block_order)");
  return guarded([&] { *csv = copy_string(stg::study_csv(stg::study(cfg->cfg, *parsed, ds->ds))); });
}

}  // extern "C"
