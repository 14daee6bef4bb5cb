#include "fpp/experiments.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace fpp;

namespace {

LabeledDataset small_dataset(std::size_t n, std::size_t seq_len, std::uint64_t seed) {
    DatasetSpec spec;
    spec.n_samples = n;
    spec.seq_len = seq_len;
    spec.seed = seed;
    return generate_dataset(spec);
}

ModelConfig tiny_model(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.fc_dim = 16;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("metrics on a hand-sized set") {
    const Matrix labels(3, 2, std::vector<double>{1.0, 0.2, 2.0, 0.4, 3.0, 0.9});
    const Matrix preds(3, 2, std::vector<double>{1.5, 0.3, 2.0, 0.2, 2.0, 0.5});
    const auto r = evaluate_predictions(preds, labels);
    CHECK(r.mu.mse == doctest::Approx(1.25 / 3));
    CHECK(r.mu.mae == doctest::Approx(0.5));
    CHECK(r.mu.r2 == doctest::Approx(0.375));
    CHECK(r.beta.mse == doctest::Approx(0.07));
    CHECK(r.beta.mae == doctest::Approx(0.7 / 3));
    CHECK(r.beta.r2 == doctest::Approx(0.1923076923076924));
    CHECK(r.overall.mse == doctest::Approx(0.24333333333333332));
    CHECK(r.overall.mae == doctest::Approx(0.3666666666666667));
    CHECK(r.overall.r2 == doctest::Approx(0.35398230088495575));
    CHECK(r.n_test == 3);
    for (const auto& m : {r.overall, r.mu, r.beta}) {
        CHECK(std::abs(m.rmse * m.rmse - m.mse) < 1e-12);
        CHECK(m.mae <= m.rmse);
        CHECK(m.r2 <= 1.0);
    }
}

TEST_CASE("perfect and mean predictor stubs") {
    const auto ds = small_dataset(200, 10, 4);
    const Predictor perfect = [&](const Matrix& w) {
        REQUIRE(w.rows() <= ds.size());
        return Matrix(w.rows(), 2,
                      std::vector<double>(ds.labels.data().begin(),
                                          ds.labels.data().begin() +
                                              static_cast<std::ptrdiff_t>(2 * w.rows())));
    };
    const auto rp = evaluate(perfect, ds, 64, 3);
    CHECK(rp.overall.mse == 0.0);
    CHECK(rp.overall.r2 == 1.0);
    CHECK(rp.mu.r2 == 1.0);
    CHECK(rp.infer_batch_size == 64);
    CHECK(rp.wall_clock_infer_per_batch >= 0.0);

    double mean_mu = 0.0;
    double mean_beta = 0.0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        mean_mu += ds.labels(r, 0);
        mean_beta += ds.labels(r, 1);
    }
    mean_mu /= 200.0;
    mean_beta /= 200.0;
    Matrix means(200, 2);
    for (std::size_t r = 0; r < 200; ++r) {
        means(r, 0) = mean_mu;
        means(r, 1) = mean_beta;
    }
    const auto rm = evaluate_predictions(means, ds.labels);
    CHECK(std::abs(rm.mu.r2) < 1e-10);
    CHECK(std::abs(rm.beta.r2) < 1e-10);
    CHECK(std::abs(rm.overall.r2) < 1e-10);

    CHECK_THROWS_AS((void)evaluate_predictions(Matrix(0, 2), Matrix(0, 2)), ConfigError);
    CHECK_THROWS_AS((void)evaluate(perfect, ds.subset({}), 64, 1), ConfigError);
}

TEST_CASE("split hygiene") {
    TrainSpec spec;
    spec.shuffle_seed = 9;
    const auto s = make_split(1000, spec);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == 1000);
    CHECK(s.test.size() == 200);
    CHECK(s.validation.size() == 80);
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
        for (auto i : *part) {
            CHECK(seen.insert(i).second);
        }
    }
    CHECK(seen.size() == 1000);
    const auto again = make_split(1000, spec);
    CHECK(again.test == s.test);
    spec.shuffle_seed = 10;
    CHECK(make_split(1000, spec).test != s.test);

    spec.split_fraction = 1.0;
    CHECK_THROWS_AS((void)make_split(1000, spec), ConfigError);
    spec.split_fraction = 0.8;
    spec.epochs = 0;
    CHECK_THROWS_AS((void)make_split(1000, spec), ConfigError);
}

TEST_CASE("toy training run") {
    const auto ds = small_dataset(2000, 20, 5);
    TrainSpec spec;
    spec.epochs = 10;
    spec.shuffle_seed = 3;
    std::size_t callbacks = 0;
    const auto res = train(ds, spec, tiny_model(1), [&](const EpochRecord&) { ++callbacks; });
    REQUIRE(res.curve.size() == 10);
    CHECK(callbacks == 10);
    CHECK(res.curve.back().train_loss < res.curve.front().train_loss);
    CHECK(res.curve.back().val_loss < res.curve.front().val_loss);
    CHECK(res.best_epoch >= 1);
    CHECK(res.best_epoch <= 10);
    double best_val = INFINITY;
    for (const auto& r : res.curve) {
        best_val = std::min(best_val, r.val_loss);
    }
    CHECK(res.curve[res.best_epoch - 1].val_loss == best_val);
    CHECK(res.optimizer.step_count == 10 * ((res.split.train.size() + 63) / 64));

    SUBCASE("same seeds give identical curves and weights, for any thread count") {
        spec.epochs = 3;
        const auto a = train(ds, spec, tiny_model(1));
        auto threaded = spec;
        threaded.threads = 3;
        const auto b = train(ds, threaded, tiny_model(1));
        REQUIRE(a.curve.size() == b.curve.size());
        for (std::size_t k = 0; k < a.curve.size(); ++k) {
            CHECK(a.curve[k].train_loss == b.curve[k].train_loss);
            CHECK(a.curve[k].val_loss == b.curve[k].val_loss);
        }
        CHECK(a.final_weights == b.final_weights);
    }
}

TEST_CASE("vanishing learning rate leaves the curve flat") {
    const auto ds = small_dataset(600, 15, 6);
    TrainSpec spec;
    spec.epochs = 4;
    spec.lr = 1e-9;
    const auto res = train(ds, spec, tiny_model(2));
    const double first = res.curve.front().val_loss;
    for (const auto& r : res.curve) {
        CHECK(std::abs(r.val_loss - first) / first < 0.01);
    }
}

TEST_CASE("divergence is reported with its location") {
    const auto ds = small_dataset(100, 5, 7);
    LabeledDataset bad = ds;
    bad.labels(bad.size() - 1, 0) = INFINITY;
    bad.labels(0, 0) = INFINITY;
    TrainSpec spec;
    spec.epochs = 2;
    spec.validation_fraction = 0.0;
    try {
        (void)train(bad, spec, tiny_model(3));
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch() == 1);
    }
}

TEST_CASE("compare_with_mom") {
    const auto ds = small_dataset(300, 30, 8);
    const Predictor oracle = [&](const Matrix& w) {
        Matrix out(w.rows(), 2);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            out(r, 0) = ds.labels(r, 0);
            out(r, 1) = ds.labels(r, 1);
        }
        return out;
    };
    const auto rep = compare_with_mom(oracle, ds, {}, 100, 3);
    CHECK(rep.n_rows == 300);
    CHECK(rep.n_mom_valid + rep.n_mom_invalid == 300);
    CHECK(rep.n_mom_valid > 200);
    CHECK(rep.lstm_mse == 0.0);
    CHECK(rep.improvement == 1.0);
    CHECK(rep.mom_mse > 0.0);
    CHECK(rep.timing_rows == 100);
    CHECK(rep.speed_ratio > 0.0);

    const auto j = nlohmann::json::parse(comparison_json(rep));
    for (const char* key : {"lstm_mse", "mom_mse", "improvement", "n_mom_invalid", "timing"}) {
        CHECK(j.contains(key));
    }

    LabeledDataset constant = ds.subset({0, 1, 2});
    for (auto& v : constant.windows.data()) {
        v = 1.0;
    }
    const auto failed = compare_with_mom(oracle, constant, {}, 3, 1);
    CHECK(failed.baseline_failed);
    CHECK(std::isnan(failed.improvement));
    CHECK(nlohmann::json::parse(comparison_json(failed))["improvement"].is_null());
}

TEST_CASE("sampling_distribution_study") {
    const auto s = sampling_distribution_study({2.622, 0.52}, 200, 30, 1);
    CHECK(s.mom.n + s.mom_excluded == 200);
    CHECK(s.mom.sd_beta.has_value());
    CHECK(s.mom.mean_beta > 0.3);
    CHECK(s.mom.mean_beta < 0.8);
    CHECK_FALSE(s.lstm.has_value());

    const auto one = sampling_distribution_study({2.622, 0.52}, 1, 30, 1);
    CHECK(one.mom.n == 1);
    CHECK_FALSE(one.mom.sd_beta.has_value());
    CHECK(nlohmann::json::parse(study_json(one))["mom"]["sd_beta"].is_null());

    const auto w = init_weights(tiny_model(1));
    const auto with_model = sampling_distribution_study({2.622, 0.52}, 20, 30, 1, &w);
    REQUIRE(with_model.lstm.has_value());
    CHECK(with_model.lstm->n == 20);
    CHECK(with_model.mom.mean_beta == sampling_distribution_study({2.622, 0.52}, 20, 30, 1).mom.mean_beta);
}

TEST_CASE("ablation") {
    CHECK(parse_axis("lr") == AblationAxis::lr);
    CHECK(to_string(AblationAxis::seq_len) == "seq_len");
    CHECK_THROWS_AS((void)parse_axis("depth"), ConfigError);
    for (auto axis : {AblationAxis::epochs, AblationAxis::samples, AblationAxis::seq_len,
                      AblationAxis::lr, AblationAxis::hidden, AblationAxis::batch}) {
        const auto v = default_ablation_values(axis);
        CHECK(std::is_sorted(v.begin(), v.end()));
        CHECK(std::adjacent_find(v.begin(), v.end()) == v.end());
    }

    AblationBase base;
    base.data.n_samples = 300;
    base.data.seq_len = 10;
    base.train.epochs = 2;
    base.model = tiny_model(1);
    CHECK_THROWS_AS((void)run_ablation(AblationAxis::hidden, {0, 4}, base), ConfigError);
    CHECK_THROWS_AS((void)run_ablation(AblationAxis::batch, {16, 8}, base), ConfigError);
    CHECK_THROWS_AS((void)run_ablation(AblationAxis::hidden, {2.5}, base), ConfigError);
    CHECK_THROWS_AS((void)run_ablation(AblationAxis::lr, {}, base), ConfigError);

    std::size_t seen = 0;
    const auto grid = run_ablation(AblationAxis::hidden, {2, 4, 8}, base,
                                   [&](const AblationCell&) { ++seen; });
    CHECK(seen == 3);
    REQUIRE(grid.cells.size() == 3);
    const std::string csv = ablation_csv(grid);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "value,rmse,mae,r2");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == 3);
    CHECK(csv.back() == '\n');
}

TEST_CASE("output formats") {
    const std::vector<EpochRecord> curve{{1, 2.5, 2.0}, {2, 1.5, 1.25}};
    CHECK(loss_curve_csv(curve) == "epoch,train_loss,val_loss\n1,2.5,2\n2,1.5,1.25\n");
    EvalReport r;
    r.overall = {1.0, 1.0, 0.5, 0.2};
    const auto j = nlohmann::json::parse(report_json(r));
    for (const char* key : {"mse", "rmse", "mae", "r2"}) {
        CHECK(j["overall"].contains(key));
        CHECK(j["mu"].contains(key));
        CHECK(j["beta"].contains(key));
    }
    CHECK(j.contains("wall_clock_train"));
    CHECK(j.contains("n_test"));
}
