#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "parallel.hpp"

namespace arcvq {

const char* kMetricsHeader =
    "step,total,recon,codebook,commit,arc,gamma,M,max_norm,usage,perplexity,psnr,ssim,l1";

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

double parse_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void round_to_single(Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
}

double max_row_norm(const Tensor& m) {
    double mx = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        mx = std::max(mx, l2_norm({m.data() + i * m.cols(), m.cols()}));
    return mx;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "variant") variant = variant_from_string(value);
    else if (key == "K") K = parse_u64(key, value);
    else if (key == "d") d = parse_u64(key, value);
    else if (key == "patch") patch = parse_u64(key, value);
    else if (key == "hidden") hidden = parse_u64(key, value);
    else if (key == "batch_size") batch_size = parse_u64(key, value);
    else if (key == "epochs") epochs = parse_u64(key, value);
    else if (key == "learning_rate") learning_rate = parse_f64(key, value);
    else if (key == "alpha") alpha = parse_f64(key, value);
    else if (key == "beta") beta = parse_f64(key, value);
    else if (key == "s") s = parse_f64(key, value);
    else if (key == "m") m = parse_f64(key, value);
    else if (key == "top_k") top_k = parse_u64(key, value);
    else if (key == "gamma0") gamma0 = parse_f64(key, value);
    else if (key == "lambda") lambda = parse_f64(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "eval_every") eval_every = parse_u64(key, value);
    else if (key == "precision") {
        if (value == "double") precision = Precision::double_prec;
        else if (value == "single") precision = Precision::single_prec;
        else throw ConfigError("config: precision must be double or single, got '" + value + "'");
    } else if (key == "data") {
        if (value != "synth" && value != "idx")
            throw ConfigError("config: data must be synth or idx, got '" + value + "'");
        data = value;
    } else if (key == "train_images") train_images = value;
    else if (key == "train_labels") train_labels = value;
    else if (key == "val_images") val_images = value;
    else if (key == "val_labels") val_labels = value;
    else if (key == "synth_images") synth_images = parse_u64(key, value);
    else if (key == "synth_val_images") synth_val_images = parse_u64(key, value);
    else if (key == "synth_side") synth_side = parse_u64(key, value);
    else if (key == "synth_clusters") synth_clusters = parse_u64(key, value);
    else if (key == "synth_noise") synth_noise = parse_f64(key, value);
    else if (key == "out_dir") out_dir = value;
    else if (key == "threads") threads = static_cast<int>(parse_u64(key, value));
    else throw ConfigError("config: unknown key '" + key + "'");
}

void TrainConfig::validate() const {
    loss_config().validate();
    if (K < 1) throw ConfigError("config: K must be >= 1");
    if (d < 2) throw ConfigError("config: d must be >= 2");
    if (patch < 1) throw ConfigError("config: patch must be >= 1");
    if (hidden < 1) throw ConfigError("config: hidden must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be > 0");
    if (alpha < 0.0) throw ConfigError("config: alpha must be >= 0");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
    if (data == "idx" && train_images.empty())
        throw ConfigError("config: data=idx requires train_images");
}

LossConfig TrainConfig::loss_config() const {
    LossConfig lc;
    lc.beta = beta;
    lc.s = s;
    lc.m = m;
    lc.k = top_k;
    lc.gamma0 = gamma0;
    lc.lambda = lambda;
    lc.variant = variant;
    return lc;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

void adam_update(Tensor& params, const Tensor& grads, AdamMoments& state, double lr,
                 std::int64_t t) {
    if (!params.same_dims(grads))
        throw ContractError("adam_update: grad dims (" + grads.dims_string() +
                            ") vs params (" + params.dims_string() + ")");
    if (state.m.size() == 0) {
        state.m = Tensor(params.dims());
        state.v = Tensor(params.dims());
    }
    if (!state.m.same_dims(params))
        throw ContractError("adam_update: moment dims (" + state.m.dims_string() +
                            ") vs params (" + params.dims_string() + ")");
    if (t < 1) throw ContractError("adam_update: t must be >= 1");

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    double* p = params.data();
    double* mm = state.m.data();
    double* vv = state.v.data();
    const double* g = grads.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
        mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
        vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = mm[i] / bc1;
        const double vhat = vv[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

TrainerState TrainerState::init(const TrainConfig& cfg) {
    cfg.validate();
    TrainerState st;
    st.cfg = cfg;
    const std::size_t side = cfg.data == "synth" ? cfg.synth_side : 0;
    // For idx data the true side is known at load time; init with the synth
    // side or the conventional 28 and rely on the per-batch shape checks.
    const std::size_t image_side = side ? side : 28;
    st.model = PatchAutoencoder::init(image_side, cfg.patch, cfg.d, cfg.hidden, cfg.seed);
    st.codebook = variant_spherical_init(cfg.variant)
                      ? init_codebook(cfg.K, cfg.d, cfg.seed + 1)
                      : init_codebook_uniform(cfg.K, cfg.d, cfg.seed + 1);
    st.codebook.alpha = cfg.alpha;
    st.codebook.bound_mode = cfg.variant == Variant::fixed_bound ? BoundMode::fixed_one
                             : variant_has_bound(cfg.variant)    ? BoundMode::exponential
                                                                 : BoundMode::unbounded;
    st.step = 0;
    return st;
}

namespace {

struct ParamRef {
    std::string name;
    Tensor* tensor;
    Var node;
};

std::vector<ParamRef> model_params(TrainerState& st, ModelNodes& nodes) {
    return {
        {"model.enc_w1", &st.model.enc_w1, nodes.enc_w1},
        {"model.enc_b1", &st.model.enc_b1, nodes.enc_b1},
        {"model.enc_w2", &st.model.enc_w2, nodes.enc_w2},
        {"model.enc_b2", &st.model.enc_b2, nodes.enc_b2},
        {"model.dec_w1", &st.model.dec_w1, nodes.dec_w1},
        {"model.dec_b1", &st.model.dec_b1, nodes.dec_b1},
        {"model.dec_w2", &st.model.dec_w2, nodes.dec_w2},
        {"model.dec_b2", &st.model.dec_b2, nodes.dec_b2},
    };
}

ModelNodes bind_constant_nodes(const PatchAutoencoder& m) {
    ModelNodes n;
    n.enc_w1 = constant(m.enc_w1);
    n.enc_b1 = constant(m.enc_b1);
    n.enc_w2 = constant(m.enc_w2);
    n.enc_b2 = constant(m.enc_b2);
    n.dec_w1 = constant(m.dec_w1);
    n.dec_b1 = constant(m.dec_b1);
    n.dec_w2 = constant(m.dec_w2);
    n.dec_b2 = constant(m.dec_b2);
    return n;
}

void check_batch(const Tensor& batch, std::size_t patch) {
    if (batch.rank() != 3 || batch.dim(1) != batch.dim(2))
        throw ShapeError("train: expected [BxHxH] batch, got (" + batch.dims_string() + ")");
    if (batch.dim(1) % patch != 0)
        throw ConfigError("train: image side " + std::to_string(batch.dim(1)) +
                          " not divisible by patch " + std::to_string(patch));
}

}  // namespace

LossBreakdown train_step(TrainerState& st, const Tensor& batch) {
    check_batch(batch, st.cfg.patch);
    const auto& cfg = st.cfg;
    const std::size_t b = batch.dim(0), side = batch.dim(1);
    const std::int64_t t = st.step;

    ModelNodes nodes = bind_parameters(st.model);
    Var cb_node = parameter(st.codebook.entries);

    Var z_e = encode(st.model, nodes, batch);
    const QuantizeMode qmode = variant_spherical_quantize(cfg.variant)
                                   ? QuantizeMode::spherical
                                   : QuantizeMode::euclidean;
    const QuantizationResult qr = quantize(z_e.value(), st.codebook, qmode);

    Var x_hat = decode(st.model, nodes, quantize_ste(z_e, qr.quantized), b, side);
    Var cb_rows = gather_rows(cb_node, qr.indices);
    VqLossParts vq = vq_loss(batch, x_hat, z_e, cb_rows, cfg.beta);

    LossBreakdown bd;
    bd.recon = vq.recon.value()[0];
    bd.codebook_term = vq.codebook.value()[0];
    bd.commit_term = vq.commit.value()[0];

    Var total = vq.total;
    if (variant_has_arc(cfg.variant)) {
        const NeighborSets sets = top_k_sets(qr.cos_table, cfg.top_k);
        std::int64_t overflow = 0;
        Var arc = arc_loss(z_e, st.codebook.entries, sets, cfg.s, cfg.m, &overflow, &qr.cos_table);
        const double gamma_t = gamma_schedule(t, cfg.gamma0, cfg.lambda);
        total = add(total, scale(arc, gamma_t));
        bd.arc = arc.value()[0];
        bd.gamma_t = gamma_t;
        bd.arc_overflow_pairs = overflow;
    }
    if (variant_has_bound(cfg.variant)) bd.M_t = norm_bound(t, cfg.alpha, st.codebook.bound_mode);
    bd.total = total.value()[0];

    if (!std::isfinite(bd.total) || !std::isfinite(bd.recon) || !std::isfinite(bd.codebook_term) ||
        !std::isfinite(bd.commit_term) || (bd.arc && !std::isfinite(*bd.arc))) {
        std::ostringstream dump;
        dump << "non-finite loss at step " << t << ": total=" << bd.total << " recon=" << bd.recon
             << " codebook=" << bd.codebook_term << " commit=" << bd.commit_term;
        if (bd.arc) dump << " arc=" << *bd.arc;
        dump << " max_norm=" << max_row_norm(st.codebook.entries);
        std::ofstream out(cfg.out_dir + "/nan_dump_step" + std::to_string(t) + ".txt");
        if (out) out << dump.str() << "\n";
        throw NumericError("train_step: " + dump.str());
    }

    backward(total);

    const std::int64_t adam_t = t + 1;
    for (auto& p : model_params(st, nodes))
        adam_update(*p.tensor, p.node.grad(), st.adam[p.name], cfg.learning_rate, adam_t);
    adam_update(st.codebook.entries, cb_node.grad(), st.adam["codebook.entries"],
                cfg.learning_rate, adam_t);

    if (variant_has_bound(cfg.variant)) {
        st.codebook.step = t;
        apply_bound(st.codebook);
    }

    if (cfg.precision == Precision::single_prec) {
        for (Tensor* p : {&st.model.enc_w1, &st.model.enc_b1, &st.model.enc_w2, &st.model.enc_b2,
                          &st.model.dec_w1, &st.model.dec_b1, &st.model.dec_w2, &st.model.dec_b2,
                          &st.codebook.entries})
            round_to_single(*p);
    }

    st.step = t + 1;
    st.codebook.step = st.step;
    return bd;
}

QuantizationResult quantize_images(TrainerState& st, const Tensor& images,
                                   bool record_usage_counts) {
    ModelNodes nodes = bind_constant_nodes(st.model);
    Var z_e = encode(st.model, nodes, images);
    const QuantizeMode qmode = variant_spherical_quantize(st.cfg.variant)
                                   ? QuantizeMode::spherical
                                   : QuantizeMode::euclidean;
    QuantizationResult qr = quantize(z_e.value(), st.codebook, qmode);
    if (record_usage_counts) record_usage(st.codebook, qr.indices);
    return qr;
}

Tensor reconstruct(const TrainerState& st, const Tensor& images) {
    ModelNodes nodes = bind_constant_nodes(st.model);
    Var z_e = encode(st.model, nodes, images);
    const QuantizeMode qmode = variant_spherical_quantize(st.cfg.variant)
                                   ? QuantizeMode::spherical
                                   : QuantizeMode::euclidean;
    const QuantizationResult qr = quantize(z_e.value(), st.codebook, qmode);
    Var out = decode(st.model, nodes, constant(qr.quantized), images.dim(0), images.dim(1));
    Tensor img = out.value();
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::min(1.0, std::max(0.0, img[i]));
    return img;
}

EvalReport evaluate(TrainerState& st, const Dataset& ds) {
    reset_usage(st.codebook);
    const std::size_t m = ds.count(), side = ds.side();
    const std::size_t chunk = std::max<std::size_t>(1, st.cfg.batch_size);

    EvalReport rep;
    double l1_sum = 0.0, psnr_sum = 0.0, ssim_sum = 0.0;
    bool fallback = false;

    for (std::size_t start = 0; start < m; start += chunk) {
        const std::size_t b = std::min(chunk, m - start);
        Tensor batch({b, side, side});
        std::copy(ds.images.data() + start * side * side,
                  ds.images.data() + (start + b) * side * side, batch.data());

        ModelNodes nodes = bind_constant_nodes(st.model);
        Var z_e = encode(st.model, nodes, batch);
        const QuantizeMode qmode = variant_spherical_quantize(st.cfg.variant)
                                       ? QuantizeMode::spherical
                                       : QuantizeMode::euclidean;
        const QuantizationResult qr = quantize(z_e.value(), st.codebook, qmode);
        record_usage(st.codebook, qr.indices);
        Var out = decode(st.model, nodes, constant(qr.quantized), b, side);

        for (std::size_t i = 0; i < b; ++i) {
            Tensor x({side, side}), y({side, side});
            std::copy(batch.data() + i * side * side, batch.data() + (i + 1) * side * side,
                      x.data());
            const double* src = out.value().data() + i * side * side;
            for (std::size_t p = 0; p < side * side; ++p)
                y[p] = std::min(1.0, std::max(0.0, src[p]));
            double acc = 0.0;
            for (std::size_t p = 0; p < side * side; ++p) acc += std::fabs(x[p] - y[p]);
            l1_sum += acc / static_cast<double>(side * side);
            psnr_sum += psnr(x, y);
            bool fb = false;
            ssim_sum += ssim(x, y, &fb);
            fallback = fallback || fb;
        }
    }

    const CodebookStats stats = compute_stats(st.codebook);
    rep.l1 = l1_sum / static_cast<double>(m);
    rep.psnr = psnr_sum / static_cast<double>(m);
    rep.ssim = ssim_sum / static_cast<double>(m);
    rep.usage_fraction = stats.usage_fraction;
    rep.perplexity = stats.perplexity;
    rep.ssim_global_fallback = fallback;
    return rep;
}

// --- checkpoint format -------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'V', 'Q', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(buf, bits);
}

struct Reader {
    const unsigned char* p;
    std::size_t left;
    std::string path;

    void need(std::size_t n) const {
        if (left < n) throw IoError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

void append_tensor(std::string& buf, const std::string& name, const Tensor& t) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) put_u64(buf, d);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(buf, t[i]);
}

std::map<std::string, const Tensor*> const_param_map(const TrainerState& st) {
    std::map<std::string, const Tensor*> m;
    m["model.enc_w1"] = &st.model.enc_w1;
    m["model.enc_b1"] = &st.model.enc_b1;
    m["model.enc_w2"] = &st.model.enc_w2;
    m["model.enc_b2"] = &st.model.enc_b2;
    m["model.dec_w1"] = &st.model.dec_w1;
    m["model.dec_b1"] = &st.model.dec_b1;
    m["model.dec_w2"] = &st.model.dec_w2;
    m["model.dec_b2"] = &st.model.dec_b2;
    return m;
}

}  // namespace

void save_checkpoint(const TrainerState& st, const std::string& path) {
    std::map<std::string, Tensor> tensors;
    for (const auto& [name, t] : const_param_map(st)) tensors[name] = *t;
    tensors["codebook.entries"] = st.codebook.entries;
    Tensor usage({std::max<std::size_t>(1, st.codebook.usage.size())});
    for (std::size_t i = 0; i < st.codebook.usage.size(); ++i)
        usage[i] = static_cast<double>(st.codebook.usage[i]);
    tensors["codebook.usage"] = usage;
    for (const auto& [name, moments] : st.adam) {
        if (moments.m.size() == 0) continue;
        tensors["adam.m." + name] = moments.m;
        tensors["adam.v." + name] = moments.v;
    }
    tensors["state.step"] = Tensor::scalar(static_cast<double>(st.step));

    const auto& c = st.cfg;
    tensors["config.variant"] = Tensor::scalar(static_cast<double>(static_cast<int>(c.variant)));
    tensors["config.K"] = Tensor::scalar(static_cast<double>(c.K));
    tensors["config.d"] = Tensor::scalar(static_cast<double>(c.d));
    tensors["config.patch"] = Tensor::scalar(static_cast<double>(c.patch));
    tensors["config.hidden"] = Tensor::scalar(static_cast<double>(c.hidden));
    tensors["config.image_side"] = Tensor::scalar(static_cast<double>(st.model.image_side));
    tensors["config.batch_size"] = Tensor::scalar(static_cast<double>(c.batch_size));
    tensors["config.epochs"] = Tensor::scalar(static_cast<double>(c.epochs));
    tensors["config.learning_rate"] = Tensor::scalar(c.learning_rate);
    tensors["config.alpha"] = Tensor::scalar(c.alpha);
    tensors["config.beta"] = Tensor::scalar(c.beta);
    tensors["config.s"] = Tensor::scalar(c.s);
    tensors["config.m"] = Tensor::scalar(c.m);
    tensors["config.top_k"] = Tensor::scalar(static_cast<double>(c.top_k));
    tensors["config.gamma0"] = Tensor::scalar(c.gamma0);
    tensors["config.lambda"] = Tensor::scalar(c.lambda);
    tensors["config.seed"] = Tensor::scalar(static_cast<double>(c.seed));
    tensors["config.eval_every"] = Tensor::scalar(static_cast<double>(c.eval_every));
    tensors["config.precision"] =
        Tensor::scalar(c.precision == Precision::single_prec ? 1.0 : 0.0);

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) append_tensor(buf, name, t);

    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write checkpoint: " + path);
    const std::size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (written != buf.size()) throw IoError("short write to checkpoint: " + path);
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), path};
    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError("bad checkpoint magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const std::uint32_t count = r.u32();

    std::map<std::string, Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        const std::uint32_t ndim = r.u32();
        if (ndim == 0 || ndim > 8) throw FormatError("bad tensor rank in " + path);
        std::vector<std::size_t> dims(ndim);
        std::size_t total = 1;
        for (auto& d : dims) {
            d = static_cast<std::size_t>(r.u64());
            if (d == 0) throw FormatError("zero tensor dim in " + path);
            total *= d;
        }
        std::vector<double> data(total);
        for (auto& v : data) v = r.f64();
        tensors.emplace(name, Tensor(std::move(dims), std::move(data)));
    }
    if (r.left != 0) throw FormatError("trailing bytes in checkpoint " + path);

    auto take = [&](const std::string& name) -> Tensor {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint missing tensor " + name);
        return it->second;
    };
    auto scalar = [&](const std::string& name) { return take(name)[0]; };

    TrainerState st;
    auto& c = st.cfg;
    const int variant_idx = static_cast<int>(scalar("config.variant"));
    if (variant_idx < 0 || variant_idx > 4) throw FormatError("bad variant index in " + path);
    c.variant = static_cast<Variant>(variant_idx);
    c.K = static_cast<std::size_t>(scalar("config.K"));
    c.d = static_cast<std::size_t>(scalar("config.d"));
    c.patch = static_cast<std::size_t>(scalar("config.patch"));
    c.hidden = static_cast<std::size_t>(scalar("config.hidden"));
    c.batch_size = static_cast<std::size_t>(scalar("config.batch_size"));
    c.epochs = static_cast<std::size_t>(scalar("config.epochs"));
    c.learning_rate = scalar("config.learning_rate");
    c.alpha = scalar("config.alpha");
    c.beta = scalar("config.beta");
    c.s = scalar("config.s");
    c.m = scalar("config.m");
    c.top_k = static_cast<std::size_t>(scalar("config.top_k"));
    c.gamma0 = scalar("config.gamma0");
    c.lambda = scalar("config.lambda");
    c.seed = static_cast<std::uint64_t>(scalar("config.seed"));
    c.eval_every = static_cast<std::size_t>(scalar("config.eval_every"));
    c.precision = scalar("config.precision") == 1.0 ? Precision::single_prec
                                                    : Precision::double_prec;

    st.model.patch = c.patch;
    st.model.d = c.d;
    st.model.hidden = c.hidden;
    st.model.image_side = static_cast<std::size_t>(scalar("config.image_side"));
    st.model.enc_w1 = take("model.enc_w1");
    st.model.enc_b1 = take("model.enc_b1");
    st.model.enc_w2 = take("model.enc_w2");
    st.model.enc_b2 = take("model.enc_b2");
    st.model.dec_w1 = take("model.dec_w1");
    st.model.dec_b1 = take("model.dec_b1");
    st.model.dec_w2 = take("model.dec_w2");
    st.model.dec_b2 = take("model.dec_b2");

    st.codebook.entries = take("codebook.entries");
    if (st.codebook.entries.rank() != 2 || st.codebook.entry_count() != c.K ||
        st.codebook.dim() != c.d)
        throw FormatError("checkpoint codebook dims mismatch in " + path);
    const Tensor usage = take("codebook.usage");
    st.codebook.usage.assign(c.K, 0);
    for (std::size_t i = 0; i < std::min<std::size_t>(c.K, usage.size()); ++i)
        st.codebook.usage[i] = static_cast<std::int64_t>(usage[i]);
    st.codebook.alpha = c.alpha;
    st.codebook.bound_mode = c.variant == Variant::fixed_bound ? BoundMode::fixed_one
                             : variant_has_bound(c.variant)    ? BoundMode::exponential
                                                               : BoundMode::unbounded;

    st.step = static_cast<std::int64_t>(scalar("state.step"));
    st.codebook.step = st.step;

    for (const auto& [name, t] : tensors) {
        if (name.rfind("adam.m.", 0) == 0) st.adam[name.substr(7)].m = t;
        else if (name.rfind("adam.v.", 0) == 0) st.adam[name.substr(7)].v = t;
    }
    return st;
}

// --- training loop ------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    // Hand-rolled Fisher-Yates so the permutation depends only on the seed
    // and epoch, not on any library's distribution internals.
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
    for (std::size_t i = count; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

namespace {

void csv_field(std::string& row, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, ",%.17g", v);  // doubles round-trip exactly
    row += buf;
}

void csv_empty(std::string& row) { row += ","; }

}  // namespace

TrainResult train(TrainerState& st, const Dataset& train_ds, const Dataset& val_ds) {
    const auto& cfg = st.cfg;
    const std::size_t side = train_ds.side();
    const std::size_t steps_per_epoch = train_ds.count() / cfg.batch_size;
    if (steps_per_epoch == 0)
        throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) +
                          " exceeds dataset size " + std::to_string(train_ds.count()));
    const std::int64_t total_steps =
        static_cast<std::int64_t>(steps_per_epoch * cfg.epochs);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string csv_path = cfg.out_dir + "/metrics.csv";
    const bool fresh = st.step == 0;
    FILE* csv = std::fopen(csv_path.c_str(), fresh ? "w" : "a");
    if (!csv) throw IoError("cannot write " + csv_path);
    if (fresh) std::fprintf(csv, "%s\n", kMetricsHeader);

    TrainResult result;
    result.metrics_csv = csv_path;

    Tensor batch({cfg.batch_size, side, side});
    std::vector<std::size_t> order;
    std::size_t order_epoch = static_cast<std::size_t>(-1);
    bool final_evaluated = false;

    while (st.step < total_steps) {
        const std::size_t epoch = static_cast<std::size_t>(st.step) / steps_per_epoch;
        const std::size_t slot = static_cast<std::size_t>(st.step) % steps_per_epoch;
        if (epoch != order_epoch) {
            order = epoch_order(train_ds.count(), cfg.seed, epoch);
            order_epoch = epoch;
        }
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const std::size_t src = order[slot * cfg.batch_size + i];
            std::copy(train_ds.images.data() + src * side * side,
                      train_ds.images.data() + (src + 1) * side * side,
                      batch.data() + i * side * side);
        }

        const std::int64_t t = st.step;
        LossBreakdown bd;
        try {
            bd = train_step(st, batch);
        } catch (...) {
            std::fclose(csv);
            throw;
        }

        const bool last = st.step == total_steps;
        const bool do_eval = last || (cfg.eval_every > 0 &&
                                      static_cast<std::size_t>(st.step) % cfg.eval_every == 0);
        EvalReport rep;
        if (do_eval) {
            rep = evaluate(st, val_ds);
            if (last) {
                result.final_eval = rep;
                final_evaluated = true;
            } else {
                save_checkpoint(st, cfg.out_dir + "/checkpoint_" + std::to_string(st.step) +
                                        ".avqc");
            }
        }

        std::string row = std::to_string(t);
        csv_field(row, bd.total);
        csv_field(row, bd.recon);
        csv_field(row, bd.codebook_term);
        csv_field(row, bd.commit_term);
        if (bd.arc) csv_field(row, *bd.arc); else csv_empty(row);
        if (bd.gamma_t) csv_field(row, *bd.gamma_t); else csv_empty(row);
        if (bd.M_t) csv_field(row, *bd.M_t); else csv_empty(row);
        csv_field(row, max_row_norm(st.codebook.entries));
        if (do_eval) {
            csv_field(row, rep.usage_fraction);
            csv_field(row, rep.perplexity);
            csv_field(row, rep.psnr);
            csv_field(row, rep.ssim);
            csv_field(row, rep.l1);
        } else {
            for (int i = 0; i < 5; ++i) csv_empty(row);
        }
        std::fprintf(csv, "%s\n", row.c_str());
    }
    std::fclose(csv);

    if (!final_evaluated) result.final_eval = evaluate(st, val_ds);
    result.final_checkpoint = cfg.out_dir + "/checkpoint_final.avqc";
    save_checkpoint(st, result.final_checkpoint);
    return result;
}

}  // namespace arcvq
