/* C API of the hingenet shared library.
 *
 * Every function returns a status code; HNG_OK is 0. On failure the
 * thread-local message from hng_last_error() describes what went wrong.
 * Objects returned through out-pointers are owned by the caller and must be
 * released with the matching *_free function. Strings returned through
 * char** out-parameters must be released with hng_string_free.
 */
#ifndef HINGENET_H
#define HINGENET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hng_status {
  HNG_OK = 0,
  HNG_ERR_INVALID_ARGUMENT = 1,
  HNG_ERR_IO = 2,
  HNG_ERR_FORMAT = 3,
  HNG_ERR_NUMERIC = 4,
  HNG_ERR_CONTRACT = 5,
  HNG_ERR_UNKNOWN = 6
} hng_status;

/* Opaque handles. */
typedef struct hng_activations hng_activations; /* per-frame beat/downbeat probabilities */
typedef struct hng_beats hng_beats;             /* decoded beat sequence */

const char* hng_version(void);
const char* hng_last_error(void);
void hng_string_free(char* s);

/* Rounded intervals between adjacent harmonics on a log-frequency axis with
 * `bins_per_octave` bins. Writes up to `capacity` values; *out_count receives
 * the interval count (n_harmonics - 1). */
hng_status hng_harmonic_intervals(int32_t bins_per_octave, int32_t n_harmonics,
                                  int32_t* out_intervals, int32_t capacity,
                                  int32_t* out_count);

/* Synthetic dataset generation. config_json: {n_items, duration_s, ...,
 * seed, split:{train,val,test}}; pass "{}" for defaults. Writes item_k.hgft,
 * item_k.beats and manifest.json into out_dir. */
hng_status hng_generate_dataset(const char* config_json, const char* out_dir);

/* Trains a model on a dataset directory. config_json: {method, stub, hinge,
 * adapter, lora, train, dbn}; "{}" for the default hinge setup. Writes
 * checkpoint.hgnm, run.json and per-test-item activations under out_dir.
 * *out_report_json receives the run report. */
hng_status hng_train(const char* config_json, const char* dataset_dir, const char* out_dir,
                     char** out_report_json);

/* Activation files (HGFT container, 1 layer, 2 channels). */
hng_status hng_activations_load(const char* path, hng_activations** out);
hng_status hng_activations_save(const hng_activations* acts, const char* path);
/* Runs inference with a trained checkpoint on a single-layer feature file. */
hng_status hng_activations_from_model(const char* checkpoint_path, const char* features_path,
                                      hng_activations** out);
void hng_activations_free(hng_activations* acts);

/* Beat decoding. config_json: {frame_rate, tau_min, tau_max,
 * tempo_change_lambda, observation_epsilon} or "{}"; the frame rate stored
 * in the activations wins. method: "dbn" (exact HMM decoding) or "peak"
 * (thresholded local maxima). */
hng_status hng_decode(const hng_activations* acts, const char* config_json,
                      const char* method, hng_beats** out);

hng_status hng_beats_save(const hng_beats* beats, const char* path);
hng_status hng_beats_load(const char* path, hng_beats** out);
hng_status hng_beats_count(const hng_beats* beats, int64_t* out);
/* position is 0 when unset, 1 for downbeats, 2..B within the bar. */
hng_status hng_beats_get(const hng_beats* beats, int64_t index, double* out_time,
                         int32_t* out_position);
void hng_beats_free(hng_beats* beats);

/* Scores one estimated beat file against a reference annotation; the report
 * JSON carries F/P/R and the continuity metrics. */
hng_status hng_evaluate(const char* est_path, const char* ref_path, double tolerance,
                        char** out_report_json);

/* Scores est/ref pairs given as JSON [["est","ref"], ...]; writes a CSV when
 * csv_path is non-NULL. Items that fail to parse are excluded and counted. */
hng_status hng_evaluate_corpus(const char* pairs_json, const char* csv_path,
                               char** out_report_json);

/* Factorial ablation over projection factors x harmonic-aware module on/off.
 * Writes ablate.csv and ablate.svg under out_dir. */
hng_status hng_ablate(const char* config_json, const char* out_dir, char** out_table_json);

/* Fine-tuning method comparison; writes compare.csv under out_dir. */
hng_status hng_compare(const char* config_json, const char* out_dir, char** out_table_json);

/* Checkpoint metadata (kind, config, parameter shapes, counts) as JSON. */
hng_status hng_inspect(const char* checkpoint_path, char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HINGENET_H */
