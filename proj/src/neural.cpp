#include "fpp/neural.hpp"

#include "fpp/dataset_io.hpp"
#include "fpp/parallel.hpp"
#include "fpp/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fpp {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "W_ii", "W_if", "W_ig", "W_io", "W_hi", "W_hf", "W_hg", "W_ho", "b_ii", "b_hi",
    "b_if", "b_hf", "b_ig", "b_hg", "b_io", "b_ho", "fc1_w", "fc1_b", "fc2_w", "fc2_b"};

constexpr std::array<char, 8> kModelMagic = {'F', 'P', 'P', 'L', 'S', 'T', 'M', '\0'};

// Gate k (i, f, g, o) -> fields.
constexpr std::array<Field, 4> kInputW = {Field::w_ii, Field::w_if, Field::w_ig, Field::w_io};
constexpr std::array<Field, 4> kHiddenW = {Field::w_hi, Field::w_hf, Field::w_hg, Field::w_ho};
constexpr std::array<Field, 4> kInputB = {Field::b_ii, Field::b_if, Field::b_ig, Field::b_io};
constexpr std::array<Field, 4> kHiddenB = {Field::b_hi, Field::b_hf, Field::b_hg, Field::b_ho};

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) {
    if (z > 0.0) {
        return z + std::log1p(std::exp(-z));
    }
    return std::log1p(std::exp(z));
}

double transform_input(const ModelConfig& cfg, double raw) {
    if (!std::isfinite(raw)) {
        throw DomainError("input sequence contains a non-finite value");
    }
    double x = raw;
    if (cfg.input_transform == InputTransform::log) {
        if (!(raw > 0.0)) {
            throw DomainError("log input transform requires positive inputs");
        }
        x = std::log(raw);
    }
    if (cfg.input_activation == InputActivation::relu) {
        x = std::max(0.0, x);
    }
    return x;
}

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError("model file is truncated");
        }
    }
    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = width - 1; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    double f64() { return std::bit_cast<double>(uint(8)); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::string bytes_;
    std::size_t pos_{0};
};

json config_to_json(const ModelConfig& c) {
    return json{{"input_dim", c.input_dim},
                {"hidden_dim", c.hidden_dim},
                {"fc_dim", c.fc_dim},
                {"output_dim", c.output_dim},
                {"input_activation", to_string(c.input_activation)},
                {"input_transform", to_string(c.input_transform)},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.fc_dim = j.at("fc_dim").get<std::size_t>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.input_activation =
        j.at("input_activation").get<std::string>() == "relu" ? InputActivation::relu : InputActivation::none;
    c.input_transform =
        j.at("input_transform").get<std::string>() == "log" ? InputTransform::log : InputTransform::raw;
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void ModelConfig::validate() const {
    if (input_dim != 1) {
        throw ConfigError("input_dim must be 1 (scalar inter-arrival per step)");
    }
    if (output_dim != 2) {
        throw ConfigError("output_dim must be 2 (mu, beta)");
    }
    if (hidden_dim < 1 || fc_dim < 1) {
        throw ConfigError("hidden_dim and fc_dim must be at least 1");
    }
}

std::string_view field_name(Field f) { return kFieldNames[static_cast<std::size_t>(f)]; }

std::pair<std::size_t, std::size_t> field_shape(const ModelConfig& c, Field f) {
    const auto k = static_cast<std::size_t>(f);
    if (k <= static_cast<std::size_t>(Field::w_io)) {
        return {c.hidden_dim, c.input_dim};
    }
    if (k <= static_cast<std::size_t>(Field::w_ho)) {
        return {c.hidden_dim, c.hidden_dim};
    }
    if (k <= static_cast<std::size_t>(Field::b_ho)) {
        return {c.hidden_dim, 1};
    }
    switch (f) {
        case Field::fc1_w: return {c.fc_dim, c.hidden_dim};
        case Field::fc1_b: return {c.fc_dim, 1};
        case Field::fc2_w: return {c.output_dim, c.fc_dim};
        default: return {c.output_dim, 1};
    }
}

LstmWeights::LstmWeights(const ModelConfig& config) : config_(config) {
    config_.validate();
    std::size_t off = 0;
    for (std::size_t k = 0; k < kFieldCount; ++k) {
        offsets_[k] = off;
        const auto [r, c] = field_shape(config_, static_cast<Field>(k));
        off += r * c;
    }
    offsets_[kFieldCount] = off;
    values_.assign(off, 0.0);
}

std::span<double> LstmWeights::field(Field f) {
    const auto k = static_cast<std::size_t>(f);
    return {values_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

std::span<const double> LstmWeights::field(Field f) const {
    const auto k = static_cast<std::size_t>(f);
    return {values_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

void LstmWeights::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

LstmWeights init_weights(const ModelConfig& config) {
    LstmWeights w(config);
    const double k = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
    Rng rng(derive_seed(config.seed, streams::weight_init));
    for (auto& v : w.values()) {
        v = rng.uniform(-k, k);
    }
    return w;
}

std::pair<Prediction, ForwardCache> forward(const LstmWeights& weights,
                                            std::span<const double> sequence) {
    const ModelConfig& cfg = weights.config();
    if (sequence.empty()) {
        throw DomainError("sequence must contain at least one step");
    }
    const std::size_t hd = cfg.hidden_dim;
    const std::size_t steps = sequence.size();

    ForwardCache cache;
    cache.hidden_dim = hd;
    cache.fc_dim = cfg.fc_dim;
    cache.steps = steps;
    cache.x.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        cache.x[t] = transform_input(cfg, sequence[t]);
    }
    for (auto* buf : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.h}) {
        buf->assign(steps * hd, 0.0);
    }

    std::array<std::span<const double>, 4> wx;
    std::array<std::span<const double>, 4> wh;
    std::array<std::span<const double>, 4> bx;
    std::array<std::span<const double>, 4> bh;
    for (std::size_t k = 0; k < 4; ++k) {
        wx[k] = weights.field(kInputW[k]);
        wh[k] = weights.field(kHiddenW[k]);
        bx[k] = weights.field(kInputB[k]);
        bh[k] = weights.field(kHiddenB[k]);
    }
    std::array<std::vector<double>*, 4> gate_out = {&cache.i, &cache.f, &cache.g, &cache.o};

    std::vector<double> zero(hd, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const double x = cache.x[t];
        const double* h_prev = t == 0 ? zero.data() : cache.h.data() + (t - 1) * hd;
        const double* c_prev = t == 0 ? zero.data() : cache.c.data() + (t - 1) * hd;
        for (std::size_t k = 0; k < 4; ++k) {
            double* out = gate_out[k]->data() + t * hd;
            for (std::size_t j = 0; j < hd; ++j) {
                double pre = wx[k][j] * x + bx[k][j] + bh[k][j];
                const double* row = wh[k].data() + j * hd;
                for (std::size_t m = 0; m < hd; ++m) {
                    pre += row[m] * h_prev[m];
                }
                out[j] = k == 2 ? std::tanh(pre) : sigmoid(pre);
            }
        }
        double* c = cache.c.data() + t * hd;
        double* h = cache.h.data() + t * hd;
        const double* ig = cache.i.data() + t * hd;
        const double* fg = cache.f.data() + t * hd;
        const double* gg = cache.g.data() + t * hd;
        const double* og = cache.o.data() + t * hd;
        for (std::size_t j = 0; j < hd; ++j) {
            c[j] = fg[j] * c_prev[j] + ig[j] * gg[j];
            h[j] = og[j] * std::tanh(c[j]);
        }
    }

    const double* h_last = cache.h.data() + (steps - 1) * hd;
    const auto w1 = weights.field(Field::fc1_w);
    const auto b1 = weights.field(Field::fc1_b);
    cache.fc1_pre.assign(cfg.fc_dim, 0.0);
    cache.fc1_out.assign(cfg.fc_dim, 0.0);
    for (std::size_t r = 0; r < cfg.fc_dim; ++r) {
        double acc = b1[r];
        for (std::size_t m = 0; m < hd; ++m) {
            acc += w1[r * hd + m] * h_last[m];
        }
        cache.fc1_pre[r] = acc;
        cache.fc1_out[r] = std::max(0.0, acc);
    }
    const auto w2 = weights.field(Field::fc2_w);
    const auto b2 = weights.field(Field::fc2_b);
    for (std::size_t r = 0; r < 2; ++r) {
        double acc = b2[r];
        for (std::size_t m = 0; m < cfg.fc_dim; ++m) {
            acc += w2[r * cfg.fc_dim + m] * cache.fc1_out[m];
        }
        cache.logits[r] = acc;
    }
    cache.prediction = Prediction{softplus(cache.logits[0]), sigmoid(cache.logits[1])};
    return {cache.prediction, std::move(cache)};
}

Prediction predict(const LstmWeights& weights, std::span<const double> sequence) {
    return forward(weights, sequence).first;
}

Matrix predict_batch(const LstmWeights& weights, const Matrix& windows, unsigned threads) {
    Matrix out(windows.rows(), 2);
    parallel_for(windows.rows(), threads, [&](std::size_t r) {
        const Prediction p = predict(weights, windows.row(r));
        out(r, 0) = p.mu_hat;
        out(r, 1) = p.beta_hat;
    });
    return out;
}

double loss_mse(const Matrix& predictions, const Matrix& labels) {
    if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
        throw std::invalid_argument("prediction and label shapes differ");
    }
    if (predictions.data().empty()) {
        throw std::invalid_argument("loss of an empty batch is undefined");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < predictions.data().size(); ++k) {
        const double d = predictions.data()[k] - labels.data()[k];
        acc += d * d;
    }
    return acc / static_cast<double>(predictions.data().size());
}

double sample_loss(const Prediction& p, std::array<double, 2> label) {
    const double dm = p.mu_hat - label[0];
    const double db = p.beta_hat - label[1];
    return 0.5 * (dm * dm + db * db);
}

void backward_accumulate(const LstmWeights& weights, const ForwardCache& cache,
                         std::array<double, 2> label, Gradients& grads, double scale) {
    const ModelConfig& cfg = weights.config();
    const std::size_t hd = cfg.hidden_dim;
    const std::size_t fd = cfg.fc_dim;
    const std::size_t steps = cache.steps;
    if (cache.hidden_dim != hd || cache.fc_dim != fd || steps == 0 ||
        cache.h.size() != steps * hd || cache.x.size() != steps) {
        throw ConfigError("forward cache does not match these weights");
    }
    if (!grads.same_shape(weights)) {
        throw ConfigError("gradient buffer does not match these weights");
    }

    // Output heads.
    const double s0 = sigmoid(cache.logits[0]);
    const double s1 = cache.prediction.beta_hat;
    std::array<double, 2> dlogit = {
        scale * (cache.prediction.mu_hat - label[0]) * s0,
        scale * (cache.prediction.beta_hat - label[1]) * s1 * (1.0 - s1)};

    const auto w2 = weights.field(Field::fc2_w);
    auto gw2 = grads.field(Field::fc2_w);
    auto gb2 = grads.field(Field::fc2_b);
    std::vector<double> dfc(fd, 0.0);
    for (std::size_t r = 0; r < 2; ++r) {
        gb2[r] += dlogit[r];
        for (std::size_t m = 0; m < fd; ++m) {
            gw2[r * fd + m] += dlogit[r] * cache.fc1_out[m];
            dfc[m] += w2[r * fd + m] * dlogit[r];
        }
    }
    for (std::size_t m = 0; m < fd; ++m) {
        if (cache.fc1_pre[m] <= 0.0) {
            dfc[m] = 0.0;
        }
    }

    const double* h_last = cache.h.data() + (steps - 1) * hd;
    const auto w1 = weights.field(Field::fc1_w);
    auto gw1 = grads.field(Field::fc1_w);
    auto gb1 = grads.field(Field::fc1_b);
    std::vector<double> dh(hd, 0.0);
    for (std::size_t r = 0; r < fd; ++r) {
        gb1[r] += dfc[r];
        for (std::size_t m = 0; m < hd; ++m) {
            gw1[r * hd + m] += dfc[r] * h_last[m];
            dh[m] += w1[r * hd + m] * dfc[r];
        }
    }

    std::array<std::span<const double>, 4> wh;
    std::array<std::span<double>, 4> gwx;
    std::array<std::span<double>, 4> gwh;
    std::array<std::span<double>, 4> gbx;
    std::array<std::span<double>, 4> gbh;
    for (std::size_t k = 0; k < 4; ++k) {
        wh[k] = weights.field(kHiddenW[k]);
        gwx[k] = grads.field(kInputW[k]);
        gwh[k] = grads.field(kHiddenW[k]);
        gbx[k] = grads.field(kInputB[k]);
        gbh[k] = grads.field(kHiddenB[k]);
    }

    std::vector<double> dc(hd, 0.0);
    std::vector<double> dh_prev(hd);
    std::array<std::vector<double>, 4> dpre;
    for (auto& v : dpre) {
        v.assign(hd, 0.0);
    }
    std::vector<double> zero(hd, 0.0);

    for (std::size_t step = steps; step-- > 0;) {
        const double* ig = cache.i.data() + step * hd;
        const double* fg = cache.f.data() + step * hd;
        const double* gg = cache.g.data() + step * hd;
        const double* og = cache.o.data() + step * hd;
        const double* c = cache.c.data() + step * hd;
        const double* c_prev = step == 0 ? zero.data() : cache.c.data() + (step - 1) * hd;
        const double* h_prev = step == 0 ? zero.data() : cache.h.data() + (step - 1) * hd;

        for (std::size_t j = 0; j < hd; ++j) {
            const double tc = std::tanh(c[j]);
            const double d_o = dh[j] * tc;
            dc[j] += dh[j] * og[j] * (1.0 - tc * tc);
            const double d_i = dc[j] * gg[j];
            const double d_g = dc[j] * ig[j];
            const double d_f = dc[j] * c_prev[j];
            dpre[0][j] = d_i * ig[j] * (1.0 - ig[j]);
            dpre[1][j] = d_f * fg[j] * (1.0 - fg[j]);
            dpre[2][j] = d_g * (1.0 - gg[j] * gg[j]);
            dpre[3][j] = d_o * og[j] * (1.0 - og[j]);
            dc[j] *= fg[j];
        }

        const double x = cache.x[step];
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        for (std::size_t k = 0; k < 4; ++k) {
            const auto& dp = dpre[k];
            for (std::size_t j = 0; j < hd; ++j) {
                const double d = dp[j];
                gwx[k][j] += d * x;
                gbx[k][j] += d;
                gbh[k][j] += d;
                double* grow = gwh[k].data() + j * hd;
                const double* wrow = wh[k].data() + j * hd;
                for (std::size_t m = 0; m < hd; ++m) {
                    grow[m] += d * h_prev[m];
                    dh_prev[m] += wrow[m] * d;
                }
            }
        }
        dh.swap(dh_prev);
    }
}

Gradients backward(const LstmWeights& weights, const ForwardCache& cache,
                   std::array<double, 2> label) {
    Gradients grads(weights.config());
    backward_accumulate(weights, cache, label, grads, 1.0);
    return grads;
}

AdamState make_adam(const LstmWeights& weights, double lr) {
    AdamState s;
    s.m.assign(weights.size(), 0.0);
    s.v.assign(weights.size(), 0.0);
    s.lr = lr;
    return s;
}

void adam_step(LstmWeights& weights, const Gradients& grads, AdamState& state) {
    if (!grads.same_shape(weights) || state.m.size() != weights.size() ||
        state.v.size() != weights.size()) {
        throw ConfigError("Adam state, gradients and weights must share a shape");
    }
    const auto& g = grads.values();
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!std::isfinite(g[k])) {
            throw NumericalError("non-finite gradient at parameter " + std::to_string(k));
        }
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    auto& w = weights.values();
    for (std::size_t k = 0; k < g.size(); ++k) {
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g[k];
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g[k] * g[k];
        const double m_hat = state.m[k] / bias1;
        const double v_hat = state.v[k] / bias2;
        w[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

double clip_gradient_norm(Gradients& grads, double max_norm) {
    double sq = 0.0;
    for (double v : grads.values()) {
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& v : grads.values()) {
            v *= s;
        }
    }
    return norm;
}

double numeric_partial(const LstmWeights& weights, std::span<const double> sequence,
                       std::array<double, 2> label, std::size_t index, double h) {
    LstmWeights probe = weights;
    const double base = probe.values().at(index);
    probe.values()[index] = base + h;
    const double up = sample_loss(predict(probe, sequence), label);
    probe.values()[index] = base - h;
    const double down = sample_loss(predict(probe, sequence), label);
    return (up - down) / (2.0 * h);
}

GradientAudit audit_gradients(const LstmWeights& weights, std::span<const double> sequence,
                              std::array<double, 2> label, std::size_t per_field,
                              std::uint64_t seed, double h, double floor) {
    const auto [pred, cache] = forward(weights, sequence);
    const Gradients analytic = backward(weights, cache, label);
    Rng rng(seed);
    GradientAudit audit;
    for (std::size_t k = 0; k < kFieldCount; ++k) {
        const auto f = static_cast<Field>(k);
        const std::size_t len = weights.field(f).size();
        const std::size_t picks = std::min(per_field, len);
        std::vector<std::size_t> idx(len);
        for (std::size_t q = 0; q < len; ++q) {
            idx[q] = q;
        }
        portable_shuffle(idx, rng);
        for (std::size_t q = 0; q < picks; ++q) {
            const std::size_t flat = weights.offset(f) + idx[q];
            const double a = analytic.values()[flat];
            const double n = numeric_partial(weights, sequence, label, flat, h);
            const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
            ++audit.coordinates_checked;
            if (rel > audit.max_relative_error) {
                audit.max_relative_error = rel;
                audit.worst_index = flat;
            }
        }
    }
    return audit;
}

void save_model(const std::filesystem::path& path, const LstmWeights& weights,
                const AdamState* optimizer) {
    json header{{"config", config_to_json(weights.config())},
                {"param_count", weights.size()},
                {"has_optimizer", optimizer != nullptr}};
    json fields = json::array();
    for (std::size_t k = 0; k < kFieldCount; ++k) {
        const auto [r, c] = field_shape(weights.config(), static_cast<Field>(k));
        fields.push_back({{"name", kFieldNames[k]}, {"rows", r}, {"cols", c}});
    }
    header["fields"] = fields;
    if (optimizer != nullptr) {
        header["optimizer"] = {{"lr", optimizer->lr},
                               {"beta1", optimizer->beta1},
                               {"beta2", optimizer->beta2},
                               {"eps", optimizer->eps}};
    }
    const std::string text = header.dump();

    std::string out(kModelMagic.begin(), kModelMagic.end());
    append_u32(out, static_cast<std::uint32_t>(kModelFormatVersion));
    append_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (double v : weights.values()) {
        append_f64(out, v);
    }
    if (optimizer != nullptr) {
        append_u64(out, optimizer->step_count);
        for (double v : optimizer->m) {
            append_f64(out, v);
        }
        for (double v : optimizer->v) {
            append_f64(out, v);
        }
    }
    write_file_atomic(path, out);
}

SavedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open model file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    Reader rd(buffer.str());

    const std::string magic = rd.raw(kModelMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kModelMagic.begin())) {
        throw FormatError("not a model file (bad magic bytes)");
    }
    const auto version = rd.uint(4);
    if (version != static_cast<std::uint64_t>(kModelFormatVersion)) {
        throw FormatError("unsupported model format_version " + std::to_string(version));
    }
    const auto header_len = rd.uint(4);
    json header;
    try {
        header = json::parse(rd.raw(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header is not valid JSON: ") + e.what());
    }

    SavedModel model;
    try {
        model.weights = LstmWeights(config_from_json(header.at("config")));
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header is missing fields: ") + e.what());
    }
    if (header.at("param_count").get<std::size_t>() != model.weights.size()) {
        throw FormatError("model param_count does not match its config");
    }
    for (auto& v : model.weights.values()) {
        v = rd.f64();
    }
    if (header.value("has_optimizer", false)) {
        AdamState st = make_adam(model.weights);
        const auto& o = header.at("optimizer");
        st.lr = o.at("lr").get<double>();
        st.beta1 = o.at("beta1").get<double>();
        st.beta2 = o.at("beta2").get<double>();
        st.eps = o.at("eps").get<double>();
        st.step_count = rd.uint(8);
        for (auto& v : st.m) {
            v = rd.f64();
        }
        for (auto& v : st.v) {
            v = rd.f64();
        }
        model.optimizer = std::move(st);
    }
    if (!rd.at_end()) {
        throw FormatError("model file has trailing bytes");
    }
    return model;
}

std::string to_string(InputActivation a) { return a == InputActivation::relu ? "relu" : "none"; }
std::string to_string(InputTransform t) { return t == InputTransform::log ? "log" : "raw"; }

}  // namespace fpp
