// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "arcvq/arcvq.h"
#include "gradcheck.hpp"
#include "losses.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

using namespace arcvq;

namespace {

int g_failures = 0;

void report(int criterion, const char* what, bool pass, const std::string& detail = "") {
    std::printf("%s  criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion, what,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    Tensor t({n, d});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
}

// --- criterion 1: gradient correctness ----------------------------------

void criterion_gradcheck() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    double worst_ops = 0.0, worst_arc = 0.0, worst_pipe = 0.0;
    std::size_t arc_configs = 0;
    for (const auto& c : gradcheck_ops_suite()) {
        pass = pass && c.pass && c.max_rel_err < 1e-6;
        worst_ops = std::max(worst_ops, c.max_rel_err);
    }
    for (const auto& c : gradcheck_arcloss_suite()) {
        pass = pass && c.pass && c.max_rel_err < 1e-4;
        worst_arc = std::max(worst_arc, c.max_rel_err);
        ++arc_configs;
    }
    for (const auto& c : gradcheck_pipeline_suite()) {
        pass = pass && c.pass && c.max_rel_err < 1e-5;
        worst_pipe = std::max(worst_pipe, c.max_rel_err);
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 60.0 && arc_configs >= 100;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "ops %.2e (<1e-6); arcloss %.2e over %zu configs (<1e-4); pipeline %.2e "
                  "(<1e-5); %.1fs (<60s)",
                  worst_ops, worst_arc, arc_configs, worst_pipe, elapsed);
    report(1, "gradient correctness", pass, buf);
}

// --- criterion 2: Eq-9 selection equivalence -----------------------------

void criterion_selection_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(160900);
    std::size_t agree = 0, total = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 64, k = 1 + rng() % 64, d = 2 + rng() % 31;
        const Tensor z = random_rows(n, d, rng);
        const Tensor e = random_rows(k, d, rng);
        const Tensor zn = normalize_rows(z);
        const Tensor en = normalize_rows(e);
        for (std::size_t i = 0; i < n; ++i) {
            // argmin ||zhat - ehat||2 with lowest-index ties.
            std::size_t arg_l2 = 0;
            double best_l2 = 1e300;
            for (std::size_t j = 0; j < k; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = zn(i, c) - en(j, c);
                    acc += diff * diff;
                }
                if (acc < best_l2) {
                    best_l2 = acc;
                    arg_l2 = j;
                }
            }
            // argmax zhat . ehat with lowest-index ties.
            std::size_t arg_dot = 0;
            double best_dot = -1e300;
            for (std::size_t j = 0; j < k; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += zn(i, c) * en(j, c);
                if (acc > best_dot) {
                    best_dot = acc;
                    arg_dot = j;
                }
            }
            agree += (arg_l2 == arg_dot);
            ++total;
        }
    }
    const double elapsed = seconds_since(t0);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu/%zu tokens agree across 1000 instances, %.2fs (<5s)",
                  agree, total, elapsed);
    report(2, "spherical argmin-l2 == argmax-dot", agree == total && elapsed < 5.0, buf);
}

// --- criterion 3: ball invariant over 500 steps --------------------------

void criterion_ball_invariant() {
    bool pass = true;
    std::string detail;
    for (Variant v : {Variant::full, Variant::fixed_bound}) {
        TrainConfig cfg;
        cfg.variant = v;
        cfg.K = 64;
        cfg.d = 16;
        cfg.patch = 4;
        cfg.hidden = 16;
        cfg.batch_size = 16;
        cfg.epochs = 50;
        cfg.synth_side = 12;
        cfg.seed = 5;
        cfg.out_dir = "acceptance_out/ball";
        std::filesystem::create_directories(cfg.out_dir);
        TrainerState st = TrainerState::init(cfg);
        const Dataset ds = synth_dataset(160, 12, 6, 77);

        Tensor batch({16, 12, 12});
        std::size_t violations = 0;
        for (std::int64_t t = 0; t < 500; ++t) {
            const std::size_t off = (static_cast<std::size_t>(t) % 10) * 16 * 144;
            std::copy(ds.images.data() + off, ds.images.data() + off + batch.size(),
                      batch.data());
            const LossBreakdown bd = train_step(st, batch);
            double max_norm = 0.0;
            for (std::size_t i = 0; i < st.codebook.entry_count(); ++i)
                max_norm =
                    std::max(max_norm, l2_norm({st.codebook.entries.data() + i * cfg.d, cfg.d}));
            if (!(max_norm <= *bd.M_t * (1.0 + 1e-6))) ++violations;
            if (v == Variant::fixed_bound && *bd.M_t != 1.0) ++violations;
        }
        pass = pass && violations == 0;
        detail += std::string(to_string(v)) + " violations=" + std::to_string(violations) + " ";
    }
    report(3, "ball invariant over 500 instrumented steps", pass, detail);
}

// --- criterion 4: stop-gradient probes ------------------------------------

void criterion_stop_gradient() {
    std::mt19937_64 rng(1212);
    std::size_t bad = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng() % 12, k = 1 + rng() % 8, d = 2 + rng() % 8;
        Tensor z_t = random_rows(n, d, rng);
        Tensor cb_t = random_rows(k, d, rng);
        const NeighborSets sets =
            top_k_sets(matmul_nt(normalize_rows(z_t), normalize_rows(cb_t)), 1 + rng() % 3);
        Var cb = parameter(cb_t);
        Var z = parameter(z_t);
        Var arc = arc_loss(z, cb.value(), sets, 5.0 + (rng() % 16), 0.1 * (rng() % 10));
        backward(arc);
        if (cb.has_grad())
            for (std::size_t i = 0; i < cb.grad().size(); ++i)
                if (cb.grad()[i] != 0.0) ++bad;
        if (!z.has_grad()) ++bad;  // the encoder side must receive gradient
    }
    report(4, "arc loss sends exactly zero gradient to the codebook", bad == 0,
           "50 random instances");
}

// --- criterion 5: quantization vs brute force ----------------------------

void criterion_quantization_oracle() {
    std::mt19937_64 rng(5150);
    std::size_t mismatches = 0, total = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 64, k = 1 + rng() % 64, d = 2 + rng() % 31;
        const Tensor z = random_rows(n, d, rng);
        Codebook cb;
        cb.entries = random_rows(k, d, rng);
        cb.usage.assign(k, 0);
        for (QuantizeMode mode : {QuantizeMode::euclidean, QuantizeMode::spherical}) {
            const QuantizationResult qr = quantize(z, cb, mode);
            const Tensor& zz = mode == QuantizeMode::spherical ? normalize_rows(z) : z;
            const Tensor& ee =
                mode == QuantizeMode::spherical ? normalize_rows(cb.entries) : cb.entries;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t best = 0;
                double best_d = 1e300;
                for (std::size_t j = 0; j < k; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double diff = zz(i, c) - ee(j, c);
                        acc += diff * diff;
                    }
                    if (acc < best_d) {
                        best_d = acc;
                        best = j;
                    }
                }
                mismatches += (static_cast<int>(best) != qr.indices[i]);
                ++total;
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu mismatches over %zu assignments", mismatches, total);
    report(5, "quantization equals the exhaustive double loop", mismatches == 0, buf);
}

// --- criteria 6-8: desk-scale directional experiments ---------------------

struct RunOutcome {
    double psnr = 0.0;
    double usage = 0.0;
    double minutes = 0.0;
    std::string checkpoint;
};

RunOutcome desk_run(Variant v, std::uint64_t seed, const Dataset& train_ds,
                    const Dataset& val_ds) {
    TrainConfig cfg;
    cfg.variant = v;
    cfg.K = 512;
    cfg.d = 64;
    cfg.patch = 4;
    cfg.hidden = 128;
    cfg.batch_size = 256;
    cfg.epochs = 10;
    cfg.seed = seed;
    cfg.out_dir = std::string("acceptance_out/") + to_string(v) + "_s" + std::to_string(seed);
    const auto t0 = std::chrono::steady_clock::now();
    TrainerState st = TrainerState::init(cfg);
    const TrainResult r = train(st, train_ds, val_ds);
    RunOutcome out;
    out.psnr = r.final_eval.psnr;
    out.usage = r.final_eval.usage_fraction;
    out.minutes = seconds_since(t0) / 60.0;
    out.checkpoint = r.final_checkpoint;
    std::printf("      run %-12s seed=%llu psnr=%.3f usage=%.4f (%.1f min)\n", to_string(v),
                static_cast<unsigned long long>(seed), out.psnr, out.usage, out.minutes);
    std::fflush(stdout);
    return out;
}

double median3(double a, double b, double c) {
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

void criteria_desk_scale(std::string& full_seed1_checkpoint) {
    const Dataset train_ds = synth_dataset(10000, 28, 10, 424242);
    const Dataset val_ds = synth_dataset(10000, 28, 10, 424243);

    struct Med {
        double psnr = 0.0, usage = 0.0;
        bool in_budget = true;
    };
    std::map<Variant, Med> med;
    for (Variant v :
         {Variant::vanilla, Variant::bbnr_only, Variant::fixed_bound, Variant::full}) {
        std::vector<RunOutcome> runs;
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            runs.push_back(desk_run(v, seed, train_ds, val_ds));
            if (v == Variant::full && seed == 1) full_seed1_checkpoint = runs.back().checkpoint;
        }
        Med m;
        m.psnr = median3(runs[0].psnr, runs[1].psnr, runs[2].psnr);
        m.usage = median3(runs[0].usage, runs[1].usage, runs[2].usage);
        for (const auto& r : runs) m.in_budget = m.in_budget && r.minutes <= 30.0;
        med[v] = m;
    }

    char buf[256];
    const Med& van = med[Variant::vanilla];
    const Med& bbnr = med[Variant::bbnr_only];
    const Med& fixed = med[Variant::fixed_bound];
    const Med& full = med[Variant::full];

    std::snprintf(buf, sizeof buf,
                  "usage full=%.4f vs vanilla=%.4f (need >=2x); psnr full=%.3f vs vanilla=%.3f "
                  "(need >= -0.1dB)",
                  full.usage, van.usage, full.psnr, van.psnr);
    const bool c6 = full.usage >= 2.0 * van.usage && full.psnr >= van.psnr - 0.1 &&
                    van.in_budget && full.in_budget;
    report(6, "usage and reconstruction direction (full vs vanilla)", c6, buf);

    std::snprintf(buf, sizeof buf, "psnr vanilla=%.3f <= bbnr=%.3f+0.05 <= full=%.3f+0.10",
                  van.psnr, bbnr.psnr, full.psnr);
    const bool c7 = van.psnr <= bbnr.psnr + 0.05 && bbnr.psnr + 0.05 <= full.psnr + 0.10 &&
                    bbnr.in_budget;
    report(7, "component-ablation ordering (vanilla <= +BBNR <= full)", c7, buf);

    std::snprintf(buf, sizeof buf,
                  "usage fixed=%.4f vs vanilla=%.4f; psnr full=%.3f vs fixed=%.3f (0.05 slack)",
                  fixed.usage, van.usage, full.psnr, fixed.psnr);
    const bool c8 = fixed.usage > van.usage && full.psnr >= fixed.psnr - 0.05 && fixed.in_budget;
    report(8, "fixed-bound ablation direction", c8, buf);
}

// --- criterion 9: k-means reduction protocol ------------------------------

void criterion_reduction(const std::string& trained_checkpoint) {
    bool pass = true;
    std::string detail;
    const Dataset val_ds = synth_dataset(2000, 28, 10, 424243);
    write_idx(val_ds, "acceptance_out/val-images.idx3-ubyte");

    avq_session* sess = nullptr;
    avq_dataset* val = nullptr;
    pass = pass && avq_session_open(trained_checkpoint.c_str(), &sess) == AVQ_OK;
    pass = pass &&
           avq_dataset_load_idx("acceptance_out/val-images.idx3-ubyte", nullptr, &val) == AVQ_OK;
    if (pass) {
        avq_eval_report before{}, identity{}, tiny{};
        pass = pass && avq_session_eval(sess, val, nullptr, &before) == AVQ_OK;

        // Identity reduction: K -> K with default Lloyd iterations.
        const int64_t k_full = avq_session_codebook_size(sess);
        pass = pass && avq_session_reduce_codebook(sess, k_full, 25, 1) == AVQ_OK;
        pass = pass && avq_session_eval(sess, val, nullptr, &identity) == AVQ_OK;
        const double drift = std::max({std::fabs(identity.psnr - before.psnr),
                                       std::fabs(identity.ssim - before.ssim),
                                       std::fabs(identity.l1 - before.l1)});
        pass = pass && drift <= 1e-9;

        // Aggressive reduction strictly degrades reconstruction.
        pass = pass && avq_session_reduce_codebook(sess, 8, 25, 1) == AVQ_OK;
        pass = pass && avq_session_eval(sess, val, nullptr, &tiny) == AVQ_OK;
        pass = pass && tiny.psnr < before.psnr;

        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "identity drift=%.2e (<=1e-9); psnr %0.3f -> %0.3f at K=8 (must drop)",
                      drift, before.psnr, tiny.psnr);
        detail = buf;
    } else {
        detail = avq_last_error();
    }
    avq_session_destroy(sess);
    avq_dataset_destroy(val);
    report(9, "k-means reduction protocol", pass, detail);
}

// --- criterion 10: format round trips -------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_round_trips() {
    bool pass = true;
    std::string detail;

    // Checkpoint: save -> load -> save reproduces identical bytes.
    {
        TrainConfig cfg;
        cfg.variant = Variant::full;
        cfg.K = 32;
        cfg.d = 8;
        cfg.patch = 4;
        cfg.hidden = 8;
        cfg.batch_size = 8;
        cfg.epochs = 1;
        cfg.synth_images = 32;
        cfg.synth_val_images = 16;
        cfg.synth_side = 8;
        cfg.out_dir = "acceptance_out/rt";
        TrainerState st = TrainerState::init(cfg);
        const Dataset tr = synth_dataset(32, 8, 3, 1);
        const Dataset va = synth_dataset(16, 8, 3, 2);
        train(st, tr, va);
        save_checkpoint(st, "acceptance_out/rt/x.avqc");
        TrainerState back = load_checkpoint("acceptance_out/rt/x.avqc");
        save_checkpoint(back, "acceptance_out/rt/y.avqc");
        const bool ckpt_ok = slurp("acceptance_out/rt/x.avqc") == slurp("acceptance_out/rt/y.avqc");
        pass = pass && ckpt_ok;
        detail += std::string("checkpoint ") + (ckpt_ok ? "bit-exact" : "MISMATCH") + "; ";
    }

    // IDX: write -> read restores the dataset exactly.
    {
        const Dataset ds = synth_dataset(64, 12, 5, 3);
        write_idx(ds, "acceptance_out/rt/i.idx", std::string("acceptance_out/rt/l.idx"));
        const Dataset back = load_idx("acceptance_out/rt/i.idx", std::string("acceptance_out/rt/l.idx"));
        bool idx_ok = back.labels == ds.labels;
        for (std::size_t i = 0; i < ds.images.size() && idx_ok; ++i)
            idx_ok = back.images[i] == ds.images[i];
        pass = pass && idx_ok;
        detail += std::string("idx ") + (idx_ok ? "bit-exact" : "MISMATCH") + "; ";
    }

    // Deterministic CSV at fixed seed, single-threaded.
    {
        set_threads(1);
        TrainConfig cfg;
        cfg.variant = Variant::full;
        cfg.K = 32;
        cfg.d = 8;
        cfg.patch = 4;
        cfg.hidden = 8;
        cfg.batch_size = 8;
        cfg.epochs = 2;
        cfg.synth_side = 8;
        cfg.seed = 77;
        const Dataset tr = synth_dataset(32, 8, 3, 10);
        const Dataset va = synth_dataset(16, 8, 3, 11);
        cfg.out_dir = "acceptance_out/det1";
        TrainerState a = TrainerState::init(cfg);
        train(a, tr, va);
        cfg.out_dir = "acceptance_out/det2";
        TrainerState b = TrainerState::init(cfg);
        train(b, tr, va);
        const bool csv_ok =
            slurp("acceptance_out/det1/metrics.csv") == slurp("acceptance_out/det2/metrics.csv");
        pass = pass && csv_ok;
        detail += std::string("csv ") + (csv_ok ? "deterministic" : "MISMATCH");
    }
    report(10, "format round trips", pass, detail);
}

// --- criterion 11: schedule spot values ------------------------------------

void criterion_schedules() {
    const bool m0 = norm_bound(0, 3e-4, BoundMode::exponential) == 1.0;
    const bool g0 = gamma_schedule(0, 1.0, 5e-4) == 1.0 && gamma_schedule(0, 0.37, 5e-4) == 0.37;
    const double gamma_2000 = gamma_schedule(2000, 1.0, 5e-4);
    const double err = std::fabs(gamma_2000 - std::exp(-1.0));
    const bool decay_ok = err < 1e-12;
    char buf[128];
    std::snprintf(buf, sizeof buf, "M(0)=1 %s; gamma(0)=gamma0 %s; |gamma(2000)-e^-1|=%.2e",
                  m0 ? "exact" : "WRONG", g0 ? "exact" : "WRONG", err);
    report(11, "schedule spot values", m0 && g0 && decay_ok, buf);
}

}  // namespace

int main() {
    set_threads(1);
    std::filesystem::create_directories("acceptance_out");

    criterion_gradcheck();
    criterion_selection_equivalence();
    criterion_ball_invariant();
    criterion_stop_gradient();
    criterion_quantization_oracle();

    std::string full_ckpt;
    criteria_desk_scale(full_ckpt);
    criterion_reduction(full_ckpt);
    criterion_round_trips();
    criterion_schedules();

    std::printf("%s: %d criterion failure(s)\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                g_failures);
    return g_failures;
}
