// arcvq command-line tool. Links the C API only.

#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "arcvq/arcvq.h"

namespace {

int runtime_fail(avq_status s) {
    std::fprintf(stderr, "error (%s): %s\n", avq_status_name(s), avq_last_error());
    return 1;
}

#define CHECK(call)                        \
    do {                                   \
        const avq_status s_ = (call);      \
        if (s_ != AVQ_OK) return runtime_fail(s_); \
    } while (0)

struct DatasetGuard {
    avq_dataset* ds = nullptr;
    ~DatasetGuard() { avq_dataset_destroy(ds); }
};

struct SessionGuard {
    avq_session* s = nullptr;
    ~SessionGuard() { avq_session_destroy(s); }
};

void print_report(const char* tag, const avq_eval_report& r) {
    std::printf("%s psnr=%.4f ssim=%.6f l1=%.6f usage=%.4f perplexity=%.2f\n", tag, r.psnr,
                r.ssim, r.l1, r.usage_fraction, r.perplexity);
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("ARCVQ_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"arcvq — spherical vector-quantization tokenizer"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "internal data parallelism cap (default 1)");

    // train
    auto* train = app.add_subcommand("train", "run the training loop");
    std::string config_path, variant, out_dir = "run";
    std::uint64_t seed = 0;
    bool seed_set = false, variant_set = false;
    train->add_option("--config", config_path, "config file (key = value lines)");
    train->add_option("--variant", variant, "vanilla|cosine-only|bbnr-only|fixed-bound|full")
        ->each([&](const std::string&) { variant_set = true; });
    train->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_set = true; });
    train->add_option("--out", out_dir, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "full-pass evaluation of a checkpoint");
    std::string ckpt_path, images_path, labels_path, csv_path;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    eval->add_option("--images", images_path, "IDX image file")->required();
    eval->add_option("--labels", labels_path, "IDX label file");
    eval->add_option("--csv", csv_path, "metrics CSV to append to");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "codebook geometry exports");
    std::string an_ckpt, an_out = "analysis";
    analyze->add_option("--checkpoint", an_ckpt, "checkpoint path")->required();
    analyze->add_option("--out", an_out, "output directory");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suites");
    std::string suite = "all";
    gradcheck->add_option("--suite", suite, "ops|arcloss|pipeline|all");

    // quantize
    auto* quantize = app.add_subcommand("quantize", "token grids, reconstructions, latent maps");
    std::string q_ckpt, q_images, q_out = "quantized";
    std::int64_t q_limit = -1;
    quantize->add_option("--checkpoint", q_ckpt, "checkpoint path")->required();
    quantize->add_option("--images", q_images, "IDX image file")->required();
    quantize->add_option("--out", q_out, "output directory");
    quantize->add_option("--limit", q_limit, "max images to export (default: all)");

    // reduce
    auto* reduce = app.add_subcommand("reduce", "post-hoc k-means codebook reduction");
    std::string r_ckpt, r_out;
    std::int64_t k_target = 0, r_iters = 25;
    std::uint64_t r_seed = 1;
    reduce->add_option("--checkpoint", r_ckpt, "checkpoint path")->required();
    reduce->add_option("--k-target", k_target, "target codebook size")->required();
    reduce->add_option("--out", r_out, "output checkpoint path")->required();
    reduce->add_option("--iters", r_iters, "Lloyd iterations (default 25)");
    reduce->add_option("--seed", r_seed, "seeding RNG seed");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic IDX dataset");
    std::string s_out = ".";
    std::int64_t s_images = 1000, s_side = 28, s_clusters = 10;
    double s_noise = 0.1;
    std::uint64_t s_seed = 1;
    synth->add_option("--out", s_out, "output directory");
    synth->add_option("--images", s_images, "image count");
    synth->add_option("--side", s_side, "image side length");
    synth->add_option("--clusters", s_clusters, "template count");
    synth->add_option("--noise", s_noise, "noise amplitude (default 0.1)");
    synth->add_option("--seed", s_seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage errors
    }

    avq_set_threads(resolve_threads(threads));

    if (train->parsed()) {
        avq_config* cfg = avq_config_create();
        if (!config_path.empty()) {
            const avq_status s = avq_config_load_file(cfg, config_path.c_str());
            if (s != AVQ_OK) {
                avq_config_destroy(cfg);
                return runtime_fail(s);
            }
        }
        avq_status s = AVQ_OK;
        if (variant_set) s = avq_config_set(cfg, "variant", variant.c_str());
        if (s == AVQ_OK && seed_set) s = avq_config_set(cfg, "seed", std::to_string(seed).c_str());
        if (s == AVQ_OK && threads > 0)
            s = avq_config_set(cfg, "threads", std::to_string(threads).c_str());
        if (s != AVQ_OK) {
            avq_config_destroy(cfg);
            return runtime_fail(s);
        }
        SessionGuard sess;
        s = avq_session_create(cfg, &sess.s);
        avq_config_destroy(cfg);
        if (s != AVQ_OK) return runtime_fail(s);
        avq_eval_report rep{};
        CHECK(avq_session_train(sess.s, nullptr, nullptr, out_dir.c_str(), &rep));
        std::string tag = "RESULT train";
        print_report(tag.c_str(), rep);
        return 0;
    }

    if (eval->parsed()) {
        SessionGuard sess;
        CHECK(avq_session_open(ckpt_path.c_str(), &sess.s));
        DatasetGuard ds;
        CHECK(avq_dataset_load_idx(images_path.c_str(),
                                   labels_path.empty() ? nullptr : labels_path.c_str(), &ds.ds));
        avq_eval_report rep{};
        CHECK(avq_session_eval(sess.s, ds.ds, csv_path.empty() ? nullptr : csv_path.c_str(),
                               &rep));
        print_report("RESULT eval", rep);
        if (rep.ssim_global_fallback)
            std::printf("note: images below 11x11, SSIM used global statistics\n");
        return 0;
    }

    if (analyze->parsed()) {
        SessionGuard sess;
        CHECK(avq_session_open(an_ckpt.c_str(), &sess.s));
        CHECK(avq_session_analyze(sess.s, an_out.c_str()));
        std::printf("wrote norms.csv, pairwise.csv, pairwise.pgm, usage.csv, summary.txt to %s\n",
                    an_out.c_str());
        return 0;
    }

    if (gradcheck->parsed()) {
        std::int64_t failures = 0;
        CHECK(avq_gradcheck(suite.c_str(), 1, &failures));
        return failures == 0 ? 0 : 1;
    }

    if (quantize->parsed()) {
        SessionGuard sess;
        CHECK(avq_session_open(q_ckpt.c_str(), &sess.s));
        DatasetGuard ds;
        CHECK(avq_dataset_load_idx(q_images.c_str(), nullptr, &ds.ds));
        CHECK(avq_session_export_quantized(sess.s, ds.ds, q_out.c_str(), q_limit));
        std::printf("exported token grids, reconstructions and latent maps to %s\n", q_out.c_str());
        return 0;
    }

    if (reduce->parsed()) {
        SessionGuard sess;
        CHECK(avq_session_open(r_ckpt.c_str(), &sess.s));
        CHECK(avq_session_reduce_codebook(sess.s, k_target, r_iters, r_seed));
        CHECK(avq_session_save(sess.s, r_out.c_str()));
        std::printf("reduced codebook to K=%lld -> %s\n", static_cast<long long>(k_target),
                    r_out.c_str());
        return 0;
    }

    if (synth->parsed()) {
        DatasetGuard ds;
        CHECK(avq_dataset_synth(s_images, s_side, s_clusters, s_noise, s_seed, &ds.ds));
        const std::string images = s_out + "/synth-images.idx3-ubyte";
        const std::string labels = s_out + "/synth-labels.idx1-ubyte";
        CHECK(avq_dataset_write_idx(ds.ds, images.c_str(), labels.c_str()));
        std::printf("wrote %s and %s\n", images.c_str(), labels.c_str());
        return 0;
    }

    return 2;
}
