#ifndef STGORMER_H
#define STGORMER_H

/* C interface to the STGormer library. Every function returns a status code;
 * on failure stg_last_error() holds a one-line description for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * stg_string_free. */

#include <stddef.h>

#if defined(STG_BUILDING_LIBRARY)
#define STG_API __attribute__((visibility("default")))
#else
#define STG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stg_status {
  STG_OK = 0,
  STG_ERR_USAGE = 1,     /* bad argument from the caller */
  STG_ERR_DATA = 2,      /* invalid data, config or file */
  STG_ERR_NUMERICAL = 3, /* loss became NaN or infinite */
  STG_ERR_INTERNAL = 4
} stg_status;

typedef struct stg_config stg_config;
typedef struct stg_dataset stg_dataset;
typedef struct stg_graph stg_graph;
typedef struct stg_model stg_model;

STG_API const char* stg_last_error(void);
STG_API const char* stg_version(void);
STG_API void stg_string_free(char* s);

/* Configuration. `path` may be NULL for the built-in defaults; overrides are "key=value". */
STG_API stg_status stg_config_load(const char* path, const char* const* overrides, size_t n_overrides,
                                   stg_config** out);
STG_API void stg_config_free(stg_config* cfg);
/* "key = value" lines, loadable by stg_config_load. */
STG_API stg_status stg_config_text(const stg_config* cfg, char** out);
/* One line per key: "key<TAB>default<TAB>help". */
STG_API stg_status stg_config_reference(char** out);

/* Synthetic data. `spec_path` may be NULL; overrides are "synth.key=value". Writes the
 * graph, flows, timestamps and echoed spec files into out_dir. */
STG_API stg_status stg_synthesize(const char* spec_path, const char* const* overrides, size_t n_overrides,
                                  const char* out_dir);
/* Default spec as "synth.key = value" lines. */
STG_API stg_status stg_synth_reference(char** out);

/* Graphs. */
STG_API stg_status stg_graph_load(const char* path, stg_graph** out);
STG_API void stg_graph_free(stg_graph* g);
STG_API size_t stg_graph_num_nodes(const stg_graph* g);
/* indegree and outdegree each receive num_nodes values. */
STG_API stg_status stg_graph_degrees(const stg_graph* g, int* indegree, int* outdegree);
/* Row-major num_nodes x num_nodes hop counts, -1 where unreachable. */
STG_API stg_status stg_graph_spd(const stg_graph* g, int* out);

/* Datasets: a directory holding graph.txt, flows.txt and timestamps.txt. */
STG_API stg_status stg_dataset_load(const char* dir, stg_dataset** out);
STG_API void stg_dataset_free(stg_dataset* ds);

/* Called after every epoch with the epoch record as one JSON object. Return nonzero to stop. */
typedef int (*stg_epoch_callback)(const char* record_json, void* user);

/* Trains on the dataset's train/val splits. history_jsonl (optional) receives one JSON line per epoch. */
STG_API stg_status stg_train(const stg_config* cfg, const stg_dataset* ds, stg_epoch_callback cb, void* user,
                             stg_model** out_model, char** history_jsonl);
STG_API void stg_model_free(stg_model* m);
STG_API stg_status stg_model_save(const stg_model* m, const char* path);
/* The configuration echoed in a checkpoint is available through stg_model_config. */
STG_API stg_status stg_model_load(const char* path, stg_model** out);
STG_API stg_status stg_model_config(const stg_model* m, stg_config** out);
STG_API stg_status stg_model_parameter_count(const stg_model* m, size_t* out);

typedef struct stg_model_dims {
  size_t t_in, t_out, nodes, channels, time_features;
} stg_model_dims;
STG_API stg_status stg_model_dims_get(const stg_model* m, stg_model_dims* out);

/* Masked metrics on split "train", "val" or "test" at the original scale. Writes
 * {"mae":..,"rmse":..,"mape":..,"threshold":..,"count":..} with mape as a fraction. */
STG_API stg_status stg_evaluate(stg_model* m, const stg_dataset* ds, const char* split, double threshold,
                                char** report_json);

/* window: t_in*nodes*channels raw values (t-major, then node, then channel);
 * timestamps: t_in*time_features; out: t_out*nodes*channels raw forecasts. */
STG_API stg_status stg_predict(stg_model* m, const double* window, const double* timestamps, double* out);

/* Row-major nodes x nodes attention bias realised from the model's SPD table. */
STG_API stg_status stg_model_sa_bias(const stg_model* m, double* out);

/* axis: "ablation", "block_count" or "block_order". Writes the CSV table. */
STG_API stg_status stg_study(const stg_config* cfg, const stg_dataset* ds, const char* axis, char** csv);

#ifdef __cplusplus
}
#endif

#endif
