#include "fpp/fpp_sim.hpp"

#include "fpp/parallel.hpp"
#include "fpp/special_fn.hpp"

#include <cmath>

namespace fpp {

void FppParams::validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw DomainError("mu must be positive and finite");
    }
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw DomainError("beta must lie in (0, 1]");
    }
}

void DatasetSpec::validate() const {
    if (n_samples < 1) {
        throw ConfigError("n_samples must be at least 1");
    }
    if (seq_len < 2) {
        throw ConfigError("seq_len must be at least 2");
    }
    if (!(mu_range.lo <= mu_range.hi)) {
        throw ConfigError("mu range is degenerate (lo > hi)");
    }
    if (!(beta_range.lo <= beta_range.hi)) {
        throw ConfigError("beta range is degenerate (lo > hi)");
    }
    if (!(mu_range.lo > 0.0) || !std::isfinite(mu_range.hi)) {
        throw ConfigError("mu range must lie in (0, inf)");
    }
    if (beta_range.lo < kMinBeta || beta_range.hi > 1.0) {
        throw ConfigError("beta range must lie in [0.05, 1]");
    }
}

void LabeledDataset::validate() const {
    if (windows.rows() != labels.rows()) {
        throw ConfigError("windows and labels have different row counts");
    }
    if (seq_len < 2 || (windows.rows() > 0 && windows.cols() != seq_len)) {
        throw ConfigError("seq_len must be at least 2 and match the window width");
    }
    if (labels.rows() > 0 && labels.cols() != 2) {
        throw ConfigError("labels must have two columns (mu, beta)");
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.seq_len = seq_len;
    out.rng_seed = rng_seed;
    out.spec = spec;
    out.source = source;
    out.time_unit = time_unit;
    out.windows = Matrix(indices.size(), windows.cols());
    out.labels = Matrix(indices.size(), 2);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto src = windows.row(indices[k]);
        std::copy(src.begin(), src.end(), out.windows.row(k).begin());
        out.labels(k, 0) = labels(indices[k], 0);
        out.labels(k, 1) = labels(indices[k], 1);
    }
    return out;
}

double sample_interarrival(const FppParams& params, double u1, double u2, double u3) {
    params.validate();
    for (double u : {u1, u2, u3}) {
        if (!(u > 0.0 && u < 1.0)) {
            throw DomainError("uniform inputs must lie strictly inside (0, 1)");
        }
    }
    const double beta = params.beta;
    const double inv_beta = 1.0 / beta;
    const double scale = std::pow(std::abs(std::log(u1)), inv_beta) / std::pow(params.mu, inv_beta);
    if (beta == 1.0) {
        return scale;
    }
    const double e3 = std::abs(std::log(u3));
    const double s = std::sin(beta * kPi * u2) *
                     std::pow(std::sin((1.0 - beta) * kPi * u2), inv_beta - 1.0) /
                     (std::pow(std::sin(kPi * u2), inv_beta) * std::pow(e3, inv_beta - 1.0));
    return scale * s;
}

double draw_interarrival(const FppParams& params, Rng& rng) {
    const double u1 = rng.open_uniform();
    const double u2 = rng.open_uniform();
    const double u3 = rng.open_uniform();
    return sample_interarrival(params, u1, u2, u3);
}

EventPath simulate_path(const FppParams& params, std::size_t n_events, std::uint64_t seed) {
    params.validate();
    if (n_events < 1) {
        throw ConfigError("n_events must be at least 1");
    }
    Rng rng(seed);
    EventPath path;
    path.params = params;
    path.inter_arrivals.reserve(n_events);
    path.event_times.reserve(n_events);
    double clock = 0.0;
    for (std::size_t k = 0; k < n_events; ++k) {
        const double gap = draw_interarrival(params, rng);
        clock += gap;
        path.inter_arrivals.push_back(gap);
        path.event_times.push_back(clock);
    }
    return path;
}

std::size_t count_events(const FppParams& params, double t, Rng& rng) {
    std::size_t count = 0;
    double clock = draw_interarrival(params, rng);
    while (clock <= t) {
        ++count;
        clock += draw_interarrival(params, rng);
    }
    return count;
}

LabeledDataset generate_dataset(const DatasetSpec& spec, unsigned threads) {
    spec.validate();
    LabeledDataset ds;
    ds.seq_len = spec.seq_len;
    ds.rng_seed = spec.seed;
    ds.spec = spec;
    ds.windows = Matrix(spec.n_samples, spec.seq_len);
    ds.labels = Matrix(spec.n_samples, 2);
    parallel_for(spec.n_samples, threads, [&](std::size_t r) {
        Rng rng(derive_seed(spec.seed, streams::dataset_rows + (r << 16)));
        FppParams p{rng.uniform(spec.mu_range.lo, spec.mu_range.hi),
                    rng.uniform(spec.beta_range.lo, spec.beta_range.hi)};
        ds.labels(r, 0) = p.mu;
        ds.labels(r, 1) = p.beta;
        auto row = ds.windows.row(r);
        for (auto& v : row) {
            v = draw_interarrival(p, rng);
        }
    });
    return ds;
}

}  // namespace fpp
