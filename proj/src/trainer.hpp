#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "codebook.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace arcvq {

enum class Precision { double_prec, single_prec };

struct TrainConfig {
    Variant variant = Variant::full;
    std::size_t K = 512;
    std::size_t d = 64;
    std::size_t patch = 4;
    std::size_t hidden = 128;
    std::size_t batch_size = 256;
    std::size_t epochs = 10;
    double learning_rate = 3e-4;
    double alpha = 3e-4;
    double beta = 0.25;
    double s = 10.0;
    double m = 0.1;
    std::size_t top_k = 3;
    double gamma0 = 1.0;
    double lambda = 5e-4;
    std::uint64_t seed = 1;
    std::size_t eval_every = 0;  // 0: evaluate only at the end
    Precision precision = Precision::double_prec;

    // Data source: "synth" generates the grating set below; "idx" reads the
    // train/val paths.
    std::string data = "synth";
    std::string train_images, train_labels, val_images, val_labels;
    std::size_t synth_images = 10000;
    std::size_t synth_val_images = 10000;
    std::size_t synth_side = 28;
    std::size_t synth_clusters = 10;
    double synth_noise = 0.1;

    std::string out_dir = ".";
    int threads = 1;

    void set(const std::string& key, const std::string& value);  // unknown key -> ConfigError
    void validate() const;
    LossConfig loss_config() const;

    static TrainConfig from_file(const std::string& path);
};

struct AdamMoments {
    Tensor m, v;
};

// Standard Adam step: beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected;
// t is the 1-based update count.
void adam_update(Tensor& params, const Tensor& grads, AdamMoments& state, double lr,
                 std::int64_t t);

struct TrainerState {
    TrainConfig cfg;
    PatchAutoencoder model;
    Codebook codebook;
    std::map<std::string, AdamMoments> adam;
    std::int64_t step = 0;

    static TrainerState init(const TrainConfig& cfg);
};

// One optimizer step on a [BxHxH] pixel batch. Sequence per variant: encode,
// quantize, (top-k sets), STE decode, loss, backward, Adam, norm-bound
// projection, t += 1.
LossBreakdown train_step(TrainerState& state, const Tensor& batch);

// Full pass over the dataset: reconstruction metrics plus usage/perplexity
// measured over exactly this pass (counters reset on entry).
EvalReport evaluate(TrainerState& state, const Dataset& ds);

// Encode + quantize + decode (clamped) for one image batch; eval-time path.
Tensor reconstruct(const TrainerState& state, const Tensor& images);
QuantizationResult quantize_images(TrainerState& state, const Tensor& images,
                                   bool record_usage_counts);

// Checkpoint container: magic "AVQC", version 1, named f64 tensors.
void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path);

struct TrainResult {
    EvalReport final_eval;
    std::string metrics_csv;
    std::string final_checkpoint;
};

// Runs the configured number of epochs, writes metrics.csv rows every step,
// evaluates/checkpoints every eval_every steps and at the end. Resuming from
// a checkpoint continues the same deterministic batch schedule.
TrainResult train(TrainerState& state, const Dataset& train_ds, const Dataset& val_ds);

// Deterministic epoch shuffle used by the trainer (exposed for tests).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

extern const char* kMetricsHeader;

}  // namespace arcvq
