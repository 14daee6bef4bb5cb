#pragma once

#include "fpp/errors.hpp"
#include "fpp/matrix.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fpp {

enum class InputActivation { none, relu };
enum class InputTransform { raw, log };

struct ModelConfig {
    std::size_t input_dim{1};
    std::size_t hidden_dim{16};
    std::size_t fc_dim{32};
    std::size_t output_dim{2};
    InputActivation input_activation{InputActivation::relu};
    InputTransform input_transform{InputTransform::raw};
    std::uint64_t seed{0};

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Parameter tensors in storage order. Gate order inside each group is
/// input (i), forget (f), cell (g), output (o).
enum class Field : std::size_t {
    w_ii, w_if, w_ig, w_io,   // hidden x input
    w_hi, w_hf, w_hg, w_ho,   // hidden x hidden
    b_ii, b_hi, b_if, b_hf,   // hidden
    b_ig, b_hg, b_io, b_ho,   // hidden
    fc1_w, fc1_b,             // fc x hidden, fc
    fc2_w, fc2_b,             // output x fc, output
};
inline constexpr std::size_t kFieldCount = 20;

[[nodiscard]] std::string_view field_name(Field f);

/// (rows, cols) of a field under `config`; vectors have cols == 1.
[[nodiscard]] std::pair<std::size_t, std::size_t> field_shape(const ModelConfig& config, Field f);

/// All trainable parameters in one flat buffer, addressed by Field.
class LstmWeights {
public:
    LstmWeights() = default;
    /// Zero-filled weights for `config`.
    explicit LstmWeights(const ModelConfig& config);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::span<double> field(Field f);
    [[nodiscard]] std::span<const double> field(Field f) const;
    [[nodiscard]] std::size_t offset(Field f) const { return offsets_[static_cast<std::size_t>(f)]; }

    [[nodiscard]] std::vector<double>& values() noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    void set_zero();
    [[nodiscard]] bool same_shape(const LstmWeights& other) const {
        return config_.hidden_dim == other.config_.hidden_dim &&
               config_.fc_dim == other.config_.fc_dim && values_.size() == other.values_.size();
    }

    friend bool operator==(const LstmWeights&, const LstmWeights&) = default;

private:
    ModelConfig config_{};
    std::array<std::size_t, kFieldCount + 1> offsets_{};
    std::vector<double> values_;
};

/// Gradients share the weight layout.
using Gradients = LstmWeights;

struct Prediction {
    double mu_hat{};
    double beta_hat{};
};

/// Per-step activations kept by forward() for backward().
struct ForwardCache {
    std::size_t hidden_dim{};
    std::size_t fc_dim{};
    std::size_t steps{};
    std::vector<double> x;  // transformed input per step
    // steps x hidden, row t holds the value at step t (1-based in the
    // recurrence, 0-based here).
    std::vector<double> i, f, g, o, c, h;
    std::vector<double> fc1_pre;  // fc_dim
    std::vector<double> fc1_out;  // fc_dim
    std::array<double, 2> logits{};
    Prediction prediction{};
};

/// Uniform in [-k, k], k = 1/sqrt(hidden_dim), from stream derived from config.seed.
[[nodiscard]] LstmWeights init_weights(const ModelConfig& config);

/// Zero initial state, optional input transform/ReLU per step, final hidden
/// state -> FC + ReLU -> FC -> (softplus, sigmoid). Throws DomainError on
/// non-finite input or an empty sequence.
[[nodiscard]] std::pair<Prediction, ForwardCache> forward(const LstmWeights& weights,
                                                          std::span<const double> sequence);

/// forward() without keeping the cache.
[[nodiscard]] Prediction predict(const LstmWeights& weights, std::span<const double> sequence);

/// One row per window: (mu_hat, beta_hat).
[[nodiscard]] Matrix predict_batch(const LstmWeights& weights, const Matrix& windows,
                                   unsigned threads = 1);

/// Mean over rows and both output columns.
[[nodiscard]] double loss_mse(const Matrix& predictions, const Matrix& labels);

/// Loss of a single sample: ((mu_hat - mu)^2 + (beta_hat - beta)^2) / 2.
[[nodiscard]] double sample_loss(const Prediction& p, std::array<double, 2> label);

/// Gradient of sample_loss w.r.t. every weight, by reverse-mode through time.
/// Throws ConfigError when the cache does not belong to these weights.
[[nodiscard]] Gradients backward(const LstmWeights& weights, const ForwardCache& cache,
                                 std::array<double, 2> label);

/// Adds scale * gradient into `grads` without allocating.
void backward_accumulate(const LstmWeights& weights, const ForwardCache& cache,
                         std::array<double, 2> label, Gradients& grads, double scale = 1.0);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step_count{0};
    double lr{1e-3};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

[[nodiscard]] AdamState make_adam(const LstmWeights& weights, double lr = 1e-3);

/// Bias-corrected Adam. Throws NumericalError (weights untouched) when any
/// gradient is non-finite.
void adam_step(LstmWeights& weights, const Gradients& grads, AdamState& state);

/// Rescales `grads` in place so its L2 norm is at most max_norm; returns the original norm.
double clip_gradient_norm(Gradients& grads, double max_norm);

/// Central difference (L(w + h e_k) - L(w - h e_k)) / 2h of sample_loss.
[[nodiscard]] double numeric_partial(const LstmWeights& weights, std::span<const double> sequence,
                                     std::array<double, 2> label, std::size_t index,
                                     double h = 1e-5);

struct GradientAudit {
    std::size_t coordinates_checked{};
    double max_relative_error{};
    std::size_t worst_index{};
};

/// Compares backward() against numeric_partial at `per_field` random
/// coordinates of every field. Relative error uses max(|a|, |n|, floor).
[[nodiscard]] GradientAudit audit_gradients(const LstmWeights& weights,
                                            std::span<const double> sequence,
                                            std::array<double, 2> label, std::size_t per_field,
                                            std::uint64_t seed, double h = 1e-5,
                                            double floor = 1e-7);

inline constexpr int kModelFormatVersion = 1;

struct SavedModel {
    LstmWeights weights;
    std::optional<AdamState> optimizer;
};

/// Binary container:
///   8 bytes magic "FPPLSTM\0", u32 LE format_version, u32 LE header length,
///   JSON header (config, param_count, field order, optimizer hyperparameters),
///   param_count f64 LE weights in Field order, then, when the header says
///   has_optimizer, u64 LE step_count followed by m and v (param_count f64 LE each).
void save_model(const std::filesystem::path& path, const LstmWeights& weights,
                const AdamState* optimizer = nullptr);

[[nodiscard]] SavedModel load_model(const std::filesystem::path& path);

[[nodiscard]] std::string to_string(InputActivation a);
[[nodiscard]] std::string to_string(InputTransform t);

}  // namespace fpp
