/* arcvq — spherical vector-quantization tokenizer library.
 *
 * C interface over the C++ core: opaque handles, status codes, and the
 * coarse-grained operations the CLI and external callers need. Every
 * function returning avq_status leaves a printable message for the most
 * recent failure in avq_last_error() (thread-local).
 */
#ifndef ARCVQ_H
#define ARCVQ_H

#include <stdint.h>

#if defined(_WIN32)
#define AVQ_API __declspec(dllexport)
#else
#define AVQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum avq_status {
    AVQ_OK = 0,
    AVQ_ERR_INVALID_ARGUMENT = 1,
    AVQ_ERR_CONFIG = 2,
    AVQ_ERR_SHAPE = 3,
    AVQ_ERR_CONTRACT = 4,
    AVQ_ERR_IO = 5,
    AVQ_ERR_FORMAT = 6,
    AVQ_ERR_NUMERIC = 7,
    AVQ_ERR_UNKNOWN = 8
} avq_status;

AVQ_API const char* avq_status_name(avq_status s);
AVQ_API const char* avq_last_error(void);
AVQ_API const char* avq_version(void);

/* Caps internal data parallelism (default 1; kernels are bit-deterministic
 * at any setting). */
AVQ_API void avq_set_threads(int n);

/* ---- training configuration (plain-text `key = value` files) ---------- */

typedef struct avq_config avq_config;

AVQ_API avq_config* avq_config_create(void);
AVQ_API void avq_config_destroy(avq_config* cfg);
AVQ_API avq_status avq_config_load_file(avq_config* cfg, const char* path);
/* Unknown keys are rejected. */
AVQ_API avq_status avq_config_set(avq_config* cfg, const char* key, const char* value);

/* ---- datasets (IDX container) ------------------------------------------ */

typedef struct avq_dataset avq_dataset;

AVQ_API avq_status avq_dataset_load_idx(const char* images_path,
                                        const char* labels_path_or_null,
                                        avq_dataset** out);
AVQ_API avq_status avq_dataset_synth(int64_t count, int64_t side, int64_t clusters,
                                     double noise, uint64_t seed, avq_dataset** out);
AVQ_API avq_status avq_dataset_write_idx(const avq_dataset* ds, const char* images_path,
                                         const char* labels_path_or_null);
AVQ_API int64_t avq_dataset_count(const avq_dataset* ds);
AVQ_API int64_t avq_dataset_side(const avq_dataset* ds);
AVQ_API void avq_dataset_destroy(avq_dataset* ds);

/* ---- sessions (model + codebook + optimizer state) --------------------- */

typedef struct avq_session avq_session;

typedef struct avq_eval_report {
    double l1;
    double psnr;
    double ssim;
    double usage_fraction;
    double perplexity;
    int ssim_global_fallback;
} avq_eval_report;

AVQ_API avq_status avq_session_create(const avq_config* cfg, avq_session** out);
AVQ_API avq_status avq_session_open(const char* checkpoint_path, avq_session** out);
AVQ_API avq_status avq_session_save(const avq_session* s, const char* checkpoint_path);
AVQ_API void avq_session_destroy(avq_session* s);

AVQ_API int64_t avq_session_step(const avq_session* s);
AVQ_API int64_t avq_session_codebook_size(const avq_session* s);

/* Builds datasets from the session config when train/val are null (synth
 * source or configured IDX paths). Emits metrics.csv, periodic and final
 * checkpoints under out_dir; fills *final_report when non-null. */
AVQ_API avq_status avq_session_train(avq_session* s, const avq_dataset* train_or_null,
                                     const avq_dataset* val_or_null, const char* out_dir,
                                     avq_eval_report* final_report);

/* Full evaluation pass; usage counters cover exactly this pass. Appends one
 * row to csv_path_or_null when given (header written if the file is new). */
AVQ_API avq_status avq_session_eval(avq_session* s, const avq_dataset* ds,
                                    const char* csv_path_or_null, avq_eval_report* out);

/* norms.csv, pairwise.csv, pairwise.pgm, usage.csv and summary.txt. */
AVQ_API avq_status avq_session_analyze(const avq_session* s, const char* out_dir);

/* Per image: token-index grid CSV, reconstruction PGM, PCA latent-map PPM.
 * limit < 0 exports every image. */
AVQ_API avq_status avq_session_export_quantized(avq_session* s, const avq_dataset* ds,
                                                const char* out_dir, int64_t limit);

/* k-means codebook reduction in place (Lloyd iterations after farthest-point
 * seeding); optimizer moments for the codebook reset. */
AVQ_API avq_status avq_session_reduce_codebook(avq_session* s, int64_t k_target,
                                               int64_t iters, uint64_t seed);

/* ---- verification ------------------------------------------------------ */

/* suite: "ops", "arcloss", "pipeline" or "all". Prints one line per check to
 * stdout when verbose != 0; *failures receives the number of failed checks. */
AVQ_API avq_status avq_gradcheck(const char* suite, int verbose, int64_t* failures);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ARCVQ_H */
