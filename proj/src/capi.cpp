#include "arcvq/arcvq.h"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "codebook.hpp"
#include "data.hpp"
#include "gradcheck.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

using namespace arcvq;

namespace {

thread_local std::string g_last_error;

avq_status fail(avq_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

// Maps the C++ error hierarchy onto status codes; the catch-all keeps
// exceptions from crossing the C boundary.
template <typename Fn>
avq_status guarded(Fn&& fn) {
    try {
        fn();
        return AVQ_OK;
    } catch (const ShapeError& e) {
        return fail(AVQ_ERR_SHAPE, e.what());
    } catch (const ConfigError& e) {
        return fail(AVQ_ERR_CONFIG, e.what());
    } catch (const ContractError& e) {
        return fail(AVQ_ERR_CONTRACT, e.what());
    } catch (const FormatError& e) {
        return fail(AVQ_ERR_FORMAT, e.what());
    } catch (const IoError& e) {
        return fail(AVQ_ERR_IO, e.what());
    } catch (const NumericError& e) {
        return fail(AVQ_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(AVQ_ERR_UNKNOWN, e.what());
    } catch (...) {
        return fail(AVQ_ERR_UNKNOWN, "unknown error");
    }
}

Dataset dataset_from_config(const TrainConfig& cfg, bool validation) {
    if (cfg.data == "synth") {
        const std::size_t count = validation ? cfg.synth_val_images : cfg.synth_images;
        const std::uint64_t seed = cfg.seed + (validation ? 2000003ull : 1000003ull);
        return synth_dataset(count, cfg.synth_side, cfg.synth_clusters, seed, cfg.synth_noise);
    }
    const std::string& images = validation ? cfg.val_images : cfg.train_images;
    const std::string& labels = validation ? cfg.val_labels : cfg.train_labels;
    if (validation && images.empty()) return dataset_from_config(cfg, false);
    if (images.empty()) throw ConfigError("config: no training images configured");
    return load_idx(images, labels.empty() ? std::nullopt : std::make_optional(labels));
}

void append_eval_csv(const std::string& path, std::int64_t step, double max_norm,
                     const EvalReport& rep) {
    const bool exists = std::filesystem::exists(path);
    FILE* f = std::fopen(path.c_str(), "a");
    if (!f) throw IoError("cannot write " + path);
    if (!exists) std::fprintf(f, "%s\n", kMetricsHeader);
    std::fprintf(f, "%lld,,,,,,,,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                 static_cast<long long>(step), max_norm, rep.usage_fraction, rep.perplexity,
                 rep.psnr, rep.ssim, rep.l1);
    std::fclose(f);
}

double codebook_max_norm(const Codebook& cb) {
    double mx = 0.0;
    for (std::size_t i = 0; i < cb.entry_count(); ++i)
        mx = std::max(mx, l2_norm({cb.entries.data() + i * cb.dim(), cb.dim()}));
    return mx;
}

avq_eval_report to_c_report(const EvalReport& r) {
    return {r.l1, r.psnr, r.ssim, r.usage_fraction, r.perplexity,
            r.ssim_global_fallback ? 1 : 0};
}

}  // namespace

struct avq_config {
    TrainConfig cfg;
};

struct avq_dataset {
    Dataset ds;
};

struct avq_session {
    TrainerState state;
};

extern "C" {

const char* avq_status_name(avq_status s) {
    switch (s) {
        case AVQ_OK: return "ok";
        case AVQ_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case AVQ_ERR_CONFIG: return "config-error";
        case AVQ_ERR_SHAPE: return "shape-error";
        case AVQ_ERR_CONTRACT: return "contract-error";
        case AVQ_ERR_IO: return "io-error";
        case AVQ_ERR_FORMAT: return "format-error";
        case AVQ_ERR_NUMERIC: return "numeric-error";
        case AVQ_ERR_UNKNOWN: return "unknown-error";
    }
    return "?";
}

const char* avq_last_error(void) {
    return g_last_error.c_str();
}

const char* avq_version(void) {
    return "0.1.0";
}

void avq_set_threads(int n) {
    set_threads(n);
}

avq_config* avq_config_create(void) {
    return new avq_config{};
}

void avq_config_destroy(avq_config* cfg) {
    delete cfg;
}

avq_status avq_config_load_file(avq_config* cfg, const char* path) {
    if (!cfg || !path) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { cfg->cfg = TrainConfig::from_file(path); });
}

avq_status avq_config_set(avq_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { cfg->cfg.set(key, value); });
}

avq_status avq_dataset_load_idx(const char* images_path, const char* labels_path_or_null,
                                avq_dataset** out) {
    if (!images_path || !out) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        auto ds = std::make_unique<avq_dataset>();
        ds->ds = load_idx(images_path, labels_path_or_null
                                           ? std::make_optional<std::string>(labels_path_or_null)
                                           : std::nullopt);
        *out = ds.release();
    });
}

avq_status avq_dataset_synth(int64_t count, int64_t side, int64_t clusters, double noise,
                             uint64_t seed, avq_dataset** out) {
    if (!out) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        if (count < 1 || side < 2 || clusters < 1)
            throw ConfigError("synth: count/side/clusters out of range");
        auto ds = std::make_unique<avq_dataset>();
        ds->ds = synth_dataset(static_cast<std::size_t>(count), static_cast<std::size_t>(side),
                               static_cast<std::size_t>(clusters), seed, noise);
        *out = ds.release();
    });
}

avq_status avq_dataset_write_idx(const avq_dataset* ds, const char* images_path,
                                 const char* labels_path_or_null) {
    if (!ds || !images_path) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const auto parent = std::filesystem::path(images_path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        write_idx(ds->ds, images_path,
                  labels_path_or_null ? std::make_optional<std::string>(labels_path_or_null)
                                      : std::nullopt);
    });
}

int64_t avq_dataset_count(const avq_dataset* ds) {
    return ds ? static_cast<int64_t>(ds->ds.count()) : 0;
}

int64_t avq_dataset_side(const avq_dataset* ds) {
    return ds ? static_cast<int64_t>(ds->ds.side()) : 0;
}

void avq_dataset_destroy(avq_dataset* ds) {
    delete ds;
}

avq_status avq_session_create(const avq_config* cfg, avq_session** out) {
    if (!cfg || !out) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        auto s = std::make_unique<avq_session>();
        s->state = TrainerState::init(cfg->cfg);
        *out = s.release();
    });
}

avq_status avq_session_open(const char* checkpoint_path, avq_session** out) {
    if (!checkpoint_path || !out) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        auto s = std::make_unique<avq_session>();
        s->state = load_checkpoint(checkpoint_path);
        *out = s.release();
    });
}

avq_status avq_session_save(const avq_session* s, const char* checkpoint_path) {
    if (!s || !checkpoint_path) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { save_checkpoint(s->state, checkpoint_path); });
}

void avq_session_destroy(avq_session* s) {
    delete s;
}

int64_t avq_session_step(const avq_session* s) {
    return s ? s->state.step : -1;
}

int64_t avq_session_codebook_size(const avq_session* s) {
    return s ? static_cast<int64_t>(s->state.codebook.entry_count()) : 0;
}

avq_status avq_session_train(avq_session* s, const avq_dataset* train_or_null,
                             const avq_dataset* val_or_null, const char* out_dir,
                             avq_eval_report* final_report) {
    if (!s || !out_dir) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        s->state.cfg.out_dir = out_dir;
        set_threads(s->state.cfg.threads);
        Dataset train_local, val_local;
        const Dataset* train_ds = train_or_null ? &train_or_null->ds : nullptr;
        const Dataset* val_ds = val_or_null ? &val_or_null->ds : nullptr;
        if (!train_ds) {
            train_local = dataset_from_config(s->state.cfg, false);
            train_ds = &train_local;
        }
        if (!val_ds) {
            if (s->state.cfg.data == "idx" && s->state.cfg.val_images.empty()) {
                val_ds = train_ds;
            } else {
                val_local = dataset_from_config(s->state.cfg, true);
                val_ds = &val_local;
            }
        }
        const TrainResult r = train(s->state, *train_ds, *val_ds);
        if (final_report) *final_report = to_c_report(r.final_eval);
    });
}

avq_status avq_session_eval(avq_session* s, const avq_dataset* ds, const char* csv_path_or_null,
                            avq_eval_report* out) {
    if (!s || !ds) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const EvalReport rep = evaluate(s->state, ds->ds);
        if (csv_path_or_null)
            append_eval_csv(csv_path_or_null, s->state.step, codebook_max_norm(s->state.codebook),
                            rep);
        if (out) *out = to_c_report(rep);
    });
}

avq_status avq_session_analyze(const avq_session* s, const char* out_dir) {
    if (!s || !out_dir) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        std::filesystem::create_directories(out_dir);
        const Codebook& cb = s->state.codebook;
        const CodebookStats stats = compute_stats(cb);
        write_stats_files(cb, stats, out_dir);

        double mean = 0.0, mn = stats.norms.empty() ? 0.0 : stats.norms[0], mx = mn;
        for (double n : stats.norms) {
            mean += n;
            mn = std::min(mn, n);
            mx = std::max(mx, n);
        }
        mean /= static_cast<double>(stats.norms.size());
        FILE* f = std::fopen((std::string(out_dir) + "/summary.txt").c_str(), "w");
        if (!f) throw IoError(std::string("cannot write ") + out_dir + "/summary.txt");
        std::fprintf(f, "entries: %zu\ndim: %zu\nstep: %lld\n", cb.entry_count(), cb.dim(),
                     static_cast<long long>(cb.step));
        std::fprintf(f, "norm min: %.12g\nnorm max: %.12g\nnorm mean: %.12g\n", mn, mx, mean);
        std::fprintf(f, "usage: %.4f%%\nperplexity: %.12g\nzero-norm rows: %zu\n",
                     100.0 * stats.usage_fraction, stats.perplexity, stats.zero_norm_count);
        std::fclose(f);
    });
}

avq_status avq_session_export_quantized(avq_session* s, const avq_dataset* ds,
                                        const char* out_dir, int64_t limit) {
    if (!s || !ds || !out_dir) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        std::filesystem::create_directories(out_dir);
        const std::size_t side = ds->ds.side();
        const std::size_t patch = s->state.model.patch;
        if (side % patch != 0)
            throw ConfigError("quantize: image side " + std::to_string(side) +
                              " not divisible by patch " + std::to_string(patch));
        const std::size_t grid = side / patch;
        const std::size_t count =
            limit < 0 ? ds->ds.count()
                      : std::min<std::size_t>(ds->ds.count(), static_cast<std::size_t>(limit));

        for (std::size_t i = 0; i < count; ++i) {
            Tensor one({1, side, side});
            std::copy(ds->ds.images.data() + i * side * side,
                      ds->ds.images.data() + (i + 1) * side * side, one.data());
            const QuantizationResult qr = quantize_images(s->state, one, false);
            const std::string stem = std::string(out_dir) + "/img_" + std::to_string(i);

            FILE* f = std::fopen((stem + "_tokens.csv").c_str(), "w");
            if (!f) throw IoError("cannot write " + stem + "_tokens.csv");
            for (std::size_t r = 0; r < grid; ++r) {
                for (std::size_t c = 0; c < grid; ++c)
                    std::fprintf(f, "%s%d", c ? "," : "", qr.indices[r * grid + c]);
                std::fprintf(f, "\n");
            }
            std::fclose(f);

            const Tensor recon = reconstruct(s->state, one);
            Tensor img({side, side});
            std::copy(recon.data(), recon.data() + side * side, img.data());
            write_pgm(img, stem + "_recon.pgm");

            write_ppm(latent_map_rgb(qr, s->state.codebook, grid, grid), stem + "_latent.ppm");
        }
    });
}

avq_status avq_session_reduce_codebook(avq_session* s, int64_t k_target, int64_t iters,
                                       uint64_t seed) {
    if (!s) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        if (k_target < 1) throw ConfigError("reduce: k_target must be >= 1");
        if (iters < 0) throw ConfigError("reduce: iters must be >= 0");
        Codebook reduced = kmeans_reduce(s->state.codebook, static_cast<std::size_t>(k_target),
                                         static_cast<std::size_t>(iters), seed);
        s->state.codebook = std::move(reduced);
        s->state.cfg.K = static_cast<std::size_t>(k_target);
        s->state.adam.erase("codebook.entries");
    });
}

avq_status avq_gradcheck(const char* suite, int verbose, int64_t* failures) {
    if (!suite) return fail(AVQ_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const std::string which = suite;
        std::vector<SuiteCheck> checks;
        auto run = [&](const std::string& name) {
            if (name == "ops") {
                auto c = gradcheck_ops_suite();
                checks.insert(checks.end(), c.begin(), c.end());
            } else if (name == "arcloss") {
                auto c = gradcheck_arcloss_suite();
                checks.insert(checks.end(), c.begin(), c.end());
            } else if (name == "pipeline") {
                auto c = gradcheck_pipeline_suite();
                checks.insert(checks.end(), c.begin(), c.end());
            } else {
                throw ConfigError("gradcheck: unknown suite '" + name + "'");
            }
        };
        if (which == "all") {
            run("ops");
            run("arcloss");
            run("pipeline");
        } else {
            run(which);
        }
        std::int64_t failed = 0;
        for (const auto& c : checks) {
            if (!c.pass) ++failed;
            if (verbose)
                std::printf("%-28s max_rel_err=%-12.3e tol=%-8.0e %s\n", c.name.c_str(),
                            c.max_rel_err, c.tol, c.pass ? "pass" : "FAIL");
        }
        if (verbose) std::printf("%zu checks, %lld failed\n", checks.size(),
                                 static_cast<long long>(failed));
        if (failures) *failures = failed;
    });
}

}  // extern "C"
