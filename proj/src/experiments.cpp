#include "fpp/experiments.hpp"

#include "fpp/parallel.hpp"
#include "fpp/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace fpp {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const Metrics& m) {
    return json{{"mse", number_or_null(m.mse)},
                {"rmse", number_or_null(m.rmse)},
                {"mae", number_or_null(m.mae)},
                {"r2", number_or_null(m.r2)}};
}

struct Accum {
    double sse{};
    double sae{};
    double sst{};
    std::size_t n{};
};

Accum column_accum(const Matrix& pred, const Matrix& labels, std::size_t col,
                   const std::vector<std::size_t>& rows) {
    Accum a;
    double mean = 0.0;
    for (auto r : rows) {
        mean += labels(r, col);
    }
    mean /= static_cast<double>(rows.size());
    for (auto r : rows) {
        const double d = pred(r, col) - labels(r, col);
        a.sse += d * d;
        a.sae += std::abs(d);
        const double dm = labels(r, col) - mean;
        a.sst += dm * dm;
    }
    a.n = rows.size();
    return a;
}

Metrics to_metrics(const Accum& a) {
    Metrics m;
    const auto n = static_cast<double>(a.n);
    m.mse = a.sse / n;
    m.rmse = std::sqrt(m.mse);
    m.mae = a.sae / n;
    m.r2 = a.sst > 0.0 ? 1.0 - a.sse / a.sst : std::nan("");
    return m;
}

struct MetricTriple {
    Metrics overall, mu, beta;
};

MetricTriple metrics_on_rows(const Matrix& pred, const Matrix& labels,
                             const std::vector<std::size_t>& rows) {
    const Accum a_mu = column_accum(pred, labels, 0, rows);
    const Accum a_beta = column_accum(pred, labels, 1, rows);
    Accum pooled{a_mu.sse + a_beta.sse, a_mu.sae + a_beta.sae, a_mu.sst + a_beta.sst,
                 a_mu.n + a_beta.n};
    return {to_metrics(pooled), to_metrics(a_mu), to_metrics(a_beta)};
}

Matrix rows_of(const Matrix& m, std::size_t count) {
    count = std::min(count, m.rows());
    std::vector<double> data(m.data().begin(),
                             m.data().begin() + static_cast<std::ptrdiff_t>(count * m.cols()));
    return Matrix(count, m.cols(), std::move(data));
}

ColumnSummary summarize_columns(const std::vector<double>& mu, const std::vector<double>& beta) {
    ColumnSummary s;
    s.n = mu.size();
    if (s.n == 0) {
        s.mean_mu = s.mean_beta = std::nan("");
        return s;
    }
    const double n = static_cast<double>(s.n);
    s.mean_mu = std::accumulate(mu.begin(), mu.end(), 0.0) / n;
    s.mean_beta = std::accumulate(beta.begin(), beta.end(), 0.0) / n;
    if (s.n >= 2) {
        double sm = 0.0;
        double sb = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) {
            sm += (mu[k] - s.mean_mu) * (mu[k] - s.mean_mu);
            sb += (beta[k] - s.mean_beta) * (beta[k] - s.mean_beta);
        }
        s.sd_mu = std::sqrt(sm / (n - 1.0));
        s.sd_beta = std::sqrt(sb / (n - 1.0));
    }
    return s;
}

json column_json(const ColumnSummary& c) {
    return json{{"n", c.n},
                {"mean_mu", number_or_null(c.mean_mu)},
                {"sd_mu", c.sd_mu ? json(*c.sd_mu) : json(nullptr)},
                {"mean_beta", number_or_null(c.mean_beta)},
                {"sd_beta", c.sd_beta ? json(*c.sd_beta) : json(nullptr)}};
}

}  // namespace

void TrainSpec::validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw ConfigError("split_fraction must lie in (0, 1)");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw ConfigError("learning rate must be finite and non-negative");
    }
}

Split make_split(std::size_t n, const TrainSpec& spec) {
    spec.validate();
    if (n < 3) {
        throw ConfigError("need at least 3 rows to form train/validation/test partitions");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(spec.shuffle_seed, streams::split));
    portable_shuffle(order, rng);

    auto n_trainval = static_cast<std::size_t>(std::floor(spec.split_fraction * static_cast<double>(n)));
    n_trainval = std::clamp<std::size_t>(n_trainval, 2, n - 1);
    auto n_val = static_cast<std::size_t>(
        std::round(spec.validation_fraction * static_cast<double>(n_trainval)));
    n_val = std::clamp<std::size_t>(n_val, 1, n_trainval - 1);

    Split s;
    s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                   order.begin() + static_cast<std::ptrdiff_t>(n_trainval));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_trainval), order.end());
    return s;
}

TrainResult train(const LabeledDataset& data, const TrainSpec& spec, const ModelConfig& config,
                  const EpochCallback& on_epoch) {
    data.validate();
    spec.validate();
    config.validate();
    const auto start = Clock::now();

    TrainResult result;
    result.split = make_split(data.size(), spec);
    const LabeledDataset val_set = data.subset(result.split.validation);

    LstmWeights weights = init_weights(config);
    AdamState adam = make_adam(weights, spec.lr);
    double best_val = std::numeric_limits<double>::infinity();
    result.best = weights;

    const std::size_t batch_cap = spec.batch_size;
    std::vector<Gradients> slots(batch_cap, Gradients(config));
    std::vector<double> slot_loss(batch_cap, 0.0);
    Gradients total(config);

    std::vector<std::size_t> order = result.split.train;
    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
        order = result.split.train;
        Rng shuffle_rng(derive_seed(spec.shuffle_seed, streams::epoch_shuffle + epoch));
        portable_shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch_cap, ++batch_index) {
            const std::size_t count = std::min(batch_cap, order.size() - begin);
            const double scale = 1.0 / static_cast<double>(count);
            parallel_for(count, spec.threads, [&](std::size_t k) {
                const std::size_t row = order[begin + k];
                slots[k].set_zero();
                const auto [pred, cache] = forward(weights, data.windows.row(row));
                const std::array<double, 2> label = {data.labels(row, 0), data.labels(row, 1)};
                slot_loss[k] = sample_loss(pred, label);
                backward_accumulate(weights, cache, label, slots[k], scale);
            });

            total.set_zero();
            double batch_loss = 0.0;
            for (std::size_t k = 0; k < count; ++k) {
                auto& dst = total.values();
                const auto& src = slots[k].values();
                for (std::size_t q = 0; q < dst.size(); ++q) {
                    dst[q] += src[q];
                }
                batch_loss += slot_loss[k];
            }
            if (!std::isfinite(batch_loss)) {
                throw TrainingDiverged("training loss became non-finite at epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(batch_index),
                                       epoch, batch_index);
            }
            epoch_loss += batch_loss;
            if (spec.max_grad_norm > 0.0) {
                clip_gradient_norm(total, spec.max_grad_norm);
            }
            try {
                adam_step(weights, total, adam);
            } catch (const NumericalError& e) {
                throw TrainingDiverged(e.what(), epoch, batch_index);
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(order.size());
        rec.val_loss = loss_mse(predict_batch(weights, val_set.windows, spec.threads), val_set.labels);
        if (!std::isfinite(rec.val_loss)) {
            throw TrainingDiverged("validation loss became non-finite at epoch " +
                                       std::to_string(epoch),
                                   epoch, batch_index);
        }
        result.curve.push_back(rec);
        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            result.best = weights;
            result.best_epoch = epoch;
        }
        if (on_epoch && spec.early_metrics_cadence > 0 &&
            (epoch % spec.early_metrics_cadence == 0 || epoch == spec.epochs)) {
            on_epoch(rec);
        }
    }
    result.final_weights = std::move(weights);
    result.optimizer = std::move(adam);
    result.wall_clock_seconds = seconds_since(start);
    return result;
}

Predictor lstm_predictor(const LstmWeights& weights, unsigned threads) {
    return [&weights, threads](const Matrix& windows) {
        return predict_batch(weights, windows, threads);
    };
}

EvalReport evaluate_predictions(const Matrix& predictions, const Matrix& labels) {
    if (labels.rows() == 0) {
        throw ConfigError("cannot evaluate on an empty test set");
    }
    if (predictions.rows() != labels.rows() || predictions.cols() != 2 || labels.cols() != 2) {
        throw ConfigError("predictions and labels must both be n x 2");
    }
    std::vector<std::size_t> rows(labels.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const MetricTriple t = metrics_on_rows(predictions, labels, rows);
    EvalReport r;
    r.overall = t.overall;
    r.mu = t.mu;
    r.beta = t.beta;
    r.n_test = labels.rows();
    return r;
}

EvalReport evaluate(const Predictor& model, const LabeledDataset& test_set, std::size_t batch_size,
                    std::size_t timing_reps) {
    if (test_set.size() == 0) {
        throw ConfigError("cannot evaluate on an empty test set");
    }
    const Matrix pred = model(test_set.windows);
    EvalReport r = evaluate_predictions(pred, test_set.labels);

    const Matrix batch = rows_of(test_set.windows, std::max<std::size_t>(batch_size, 1));
    std::vector<double> times;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(timing_reps, 1); ++rep) {
        const auto t0 = Clock::now();
        const Matrix out = model(batch);
        times.push_back(seconds_since(t0));
        if (out.rows() != batch.rows()) {
            throw ConfigError("predictor returned the wrong number of rows");
        }
    }
    r.wall_clock_infer_per_batch = median(times);
    r.infer_batch_size = batch.rows();
    return r;
}

ComparisonReport compare_with_mom(const Predictor& model, const LabeledDataset& test_set,
                                  const ClipPolicy& clip, std::size_t timing_rows,
                                  std::size_t timing_reps) {
    if (test_set.size() == 0) {
        throw ConfigError("cannot compare on an empty test set");
    }
    ComparisonReport rep;
    rep.n_rows = test_set.size();

    const Matrix lstm_pred = model(test_set.windows);
    const auto estimates = mom_estimate_windows(test_set.windows, clip);
    Matrix mom_pred(test_set.size(), 2, std::nan(""));
    std::vector<std::size_t> valid_rows;
    std::vector<std::size_t> all_rows(test_set.size());
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    for (std::size_t r = 0; r < estimates.size(); ++r) {
        if (estimates[r].valid) {
            valid_rows.push_back(r);
            mom_pred(r, 0) = estimates[r].mu_hat;
            mom_pred(r, 1) = estimates[r].beta_hat;
        }
    }
    rep.n_mom_valid = valid_rows.size();
    rep.n_mom_invalid = rep.n_rows - rep.n_mom_valid;
    rep.lstm_mse_all = metrics_on_rows(lstm_pred, test_set.labels, all_rows).overall.mse;

    if (valid_rows.empty()) {
        rep.baseline_failed = true;
        rep.lstm_mse = rep.lstm_mse_all;
        rep.mom_mse = std::nan("");
        rep.improvement = std::nan("");
    } else {
        const MetricTriple l = metrics_on_rows(lstm_pred, test_set.labels, valid_rows);
        const MetricTriple m = metrics_on_rows(mom_pred, test_set.labels, valid_rows);
        rep.lstm_mse = l.overall.mse;
        rep.mom_mse = m.overall.mse;
        rep.lstm_mu = l.mu;
        rep.lstm_beta = l.beta;
        rep.mom_mu = m.mu;
        rep.mom_beta = m.beta;
        rep.improvement = 1.0 - rep.lstm_mse / rep.mom_mse;
    }

    const Matrix batch = rows_of(test_set.windows, std::max<std::size_t>(timing_rows, 1));
    rep.timing_rows = batch.rows();
    rep.timing_reps = std::max<std::size_t>(timing_reps, 1);
    std::vector<double> lstm_times;
    std::vector<double> mom_times;
    volatile double sink = 0.0;
    for (std::size_t k = 0; k < rep.timing_reps; ++k) {
        auto t0 = Clock::now();
        const Matrix p = model(batch);
        lstm_times.push_back(seconds_since(t0));
        sink = sink + p(0, 0);
        t0 = Clock::now();
        const auto e = mom_estimate_windows(batch, clip, 1);
        mom_times.push_back(seconds_since(t0));
        sink = sink + e[0].beta_hat;
    }
    rep.lstm_seconds = median(lstm_times);
    rep.mom_seconds = median(mom_times);
    rep.speed_ratio = rep.mom_seconds / rep.lstm_seconds;
    return rep;
}

SamplingStudy sampling_distribution_study(const FppParams& truth, std::size_t n_paths,
                                          std::size_t seq_len, std::uint64_t seed,
                                          const LstmWeights* model, const ClipPolicy& clip) {
    truth.validate();
    if (n_paths < 1 || seq_len < 2) {
        throw ConfigError("need at least one path of length >= 2");
    }
    SamplingStudy study;
    study.truth = truth;
    study.n_paths = n_paths;
    study.seq_len = seq_len;

    Matrix windows(n_paths, seq_len);
    for (std::size_t k = 0; k < n_paths; ++k) {
        const EventPath path =
            simulate_path(truth, seq_len, derive_seed(seed, streams::study_paths + k));
        std::copy(path.inter_arrivals.begin(), path.inter_arrivals.end(), windows.row(k).begin());
    }

    std::vector<double> mu;
    std::vector<double> beta;
    for (const auto& e : mom_estimate_windows(windows, clip)) {
        if (e.usable_as_label()) {
            mu.push_back(e.mu_hat);
            beta.push_back(e.beta_hat);
        } else {
            ++study.mom_excluded;
        }
    }
    study.mom = summarize_columns(mu, beta);

    if (model != nullptr) {
        const Matrix pred = predict_batch(*model, windows);
        std::vector<double> lm(n_paths);
        std::vector<double> lb(n_paths);
        for (std::size_t k = 0; k < n_paths; ++k) {
            lm[k] = pred(k, 0);
            lb[k] = pred(k, 1);
        }
        study.lstm = summarize_columns(lm, lb);
    }
    return study;
}

std::string to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::epochs: return "epochs";
        case AblationAxis::samples: return "samples";
        case AblationAxis::seq_len: return "seq_len";
        case AblationAxis::lr: return "lr";
        case AblationAxis::hidden: return "hidden";
        case AblationAxis::batch: return "batch";
    }
    return "unknown";
}

AblationAxis parse_axis(const std::string& name) {
    for (auto a : {AblationAxis::epochs, AblationAxis::samples, AblationAxis::seq_len,
                   AblationAxis::lr, AblationAxis::hidden, AblationAxis::batch}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw ConfigError("unknown ablation axis '" + name + "'");
}

std::vector<double> default_ablation_values(AblationAxis a) {
    switch (a) {
        case AblationAxis::epochs: return {10, 25, 50, 100, 200};
        case AblationAxis::samples: return {100, 500, 2000, 10000};
        case AblationAxis::seq_len: return {10, 20, 30, 50};
        case AblationAxis::lr: return {1e-5, 1e-4, 1e-3, 5e-3, 1e-2, 1e-1};
        case AblationAxis::hidden: return {4, 8, 16, 32, 64, 128, 256};
        case AblationAxis::batch: return {8, 16, 32, 64, 128};
    }
    return {};
}

AblationGrid run_ablation(AblationAxis axis, const std::vector<double>& values,
                          const AblationBase& base,
                          const std::function<void(const AblationCell&)>& on_cell) {
    if (values.empty()) {
        throw ConfigError("ablation needs at least one value");
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double v = values[k];
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError("ablation values must be positive and finite");
        }
        if (axis != AblationAxis::lr && v != std::floor(v)) {
            throw ConfigError("ablation values on axis " + to_string(axis) + " must be integers");
        }
        if (k > 0 && !(v > values[k - 1])) {
            throw ConfigError("ablation values must be strictly increasing");
        }
    }

    AblationGrid grid;
    grid.axis = axis;
    grid.values = values;
    for (double v : values) {
        AblationBase cell = base;
        const auto iv = static_cast<std::size_t>(v);
        switch (axis) {
            case AblationAxis::epochs: cell.train.epochs = iv; break;
            case AblationAxis::samples: cell.data.n_samples = iv; break;
            case AblationAxis::seq_len: cell.data.seq_len = iv; break;
            case AblationAxis::lr: cell.train.lr = v; break;
            case AblationAxis::hidden: cell.model.hidden_dim = iv; break;
            case AblationAxis::batch: cell.train.batch_size = iv; break;
        }
        const LabeledDataset data = generate_dataset(cell.data, cell.train.threads);
        const TrainResult tr = train(data, cell.train, cell.model);
        const LabeledDataset test = data.subset(tr.split.test);
        AblationCell out;
        out.value = v;
        out.report = evaluate(lstm_predictor(tr.best, cell.train.threads), test, 64, 3);
        out.report.wall_clock_train = tr.wall_clock_seconds;
        if (on_cell) {
            on_cell(out);
        }
        grid.cells.push_back(out);
    }
    return grid;
}

std::string loss_curve_csv(const std::vector<EpochRecord>& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_loss\n";
    for (const auto& r : curve) {
        os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
    }
    return os.str();
}

std::string ablation_csv(const AblationGrid& grid) {
    std::ostringstream os;
    os.precision(17);
    os << "value,rmse,mae,r2\n";
    for (const auto& c : grid.cells) {
        os << c.value << ',' << c.report.overall.rmse << ',' << c.report.overall.mae << ','
           << c.report.overall.r2 << '\n';
    }
    return os.str();
}

std::string report_json(const EvalReport& r) {
    json j{{"overall", metrics_json(r.overall)},
           {"mu", metrics_json(r.mu)},
           {"beta", metrics_json(r.beta)},
           {"wall_clock_train", r.wall_clock_train},
           {"wall_clock_infer_per_batch", r.wall_clock_infer_per_batch},
           {"infer_batch_size", r.infer_batch_size},
           {"n_test", r.n_test}};
    return j.dump(2) + "\n";
}

std::string comparison_json(const ComparisonReport& r) {
    json j{{"n_rows", r.n_rows},
           {"n_mom_valid", r.n_mom_valid},
           {"n_mom_invalid", r.n_mom_invalid},
           {"baseline_failed", r.baseline_failed},
           {"lstm_mse", number_or_null(r.lstm_mse)},
           {"lstm_mse_all_rows", number_or_null(r.lstm_mse_all)},
           {"mom_mse", number_or_null(r.mom_mse)},
           {"improvement", number_or_null(r.improvement)},
           {"lstm", {{"mu", metrics_json(r.lstm_mu)}, {"beta", metrics_json(r.lstm_beta)}}},
           {"mom", {{"mu", metrics_json(r.mom_mu)}, {"beta", metrics_json(r.mom_beta)}}},
           {"timing",
            {{"rows", r.timing_rows},
             {"repetitions", r.timing_reps},
             {"lstm_seconds", r.lstm_seconds},
             {"mom_seconds", r.mom_seconds},
             {"speed_ratio", number_or_null(r.speed_ratio)}}}};
    return j.dump(2) + "\n";
}

std::string study_json(const SamplingStudy& s) {
    json j{{"true_mu", s.truth.mu},
           {"true_beta", s.truth.beta},
           {"n_paths", s.n_paths},
           {"seq_len", s.seq_len},
           {"mom", column_json(s.mom)},
           {"mom_excluded", s.mom_excluded},
           {"lstm", s.lstm ? column_json(*s.lstm) : json(nullptr)}};
    return j.dump(2) + "\n";
}

}  // namespace fpp
