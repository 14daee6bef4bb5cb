#include "fpp/fpp_sim.hpp"
#include "fpp/ingest.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace fpp;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / "fpp_ingest_test";
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name) << text;
        return path / name;
    }
};

}  // namespace

TEST_CASE("ISO datetimes") {
    // Python calendar.timegm cross-check
    CHECK(parse_iso_datetime("2015-12-10 17:10:52") == 1449767452.0);
    CHECK(parse_iso_datetime("2015-12-10T17:10:52Z") == 1449767452.0);
    CHECK(parse_iso_datetime("2000-02-29") == 951782400.0);
    CHECK(parse_iso_datetime("1969-12-31 23:59:59") == -1.0);
    CHECK(parse_iso_datetime("2015-12-10 17:10:52.25") == 1449767452.25);
    CHECK_FALSE(parse_iso_datetime("2015-02-30 00:00:00").has_value());
    CHECK_FALSE(parse_iso_datetime("2015-12-10 25:00:00").has_value());
    CHECK_FALSE(parse_iso_datetime("12/10/2015 17:10").has_value());
    CHECK_FALSE(parse_iso_datetime("").has_value());
    CHECK_FALSE(parse_iso_datetime("2015-12-10 17:10:52.x").has_value());
}

TEST_CASE("delimited fields") {
    CHECK(split_delimited("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(split_delimited(R"("x, y",2,"say ""hi""")", ',') ==
          std::vector<std::string>{"x, y", "2", R"(say "hi")"});
    CHECK(split_delimited("1;2\r", ';') == std::vector<std::string>{"1", "2"});
}

TEST_CASE("inter-arrivals from timestamps") {
    const auto r = interarrivals_from_timestamps({0, 2, 5, 5, 9}, true);
    CHECK(r.gaps == std::vector<double>{2, 3, 4});
    CHECK(r.stats.n_dropped_nonpositive == 1);
    CHECK(r.stats.n_gaps == 4);
    CHECK(r.stats.n_valid == 3);
    CHECK(r.stats.t_start == 0);
    CHECK(r.stats.t_end == 9);

    const auto shuffled = interarrivals_from_timestamps({9, 5, 0, 5, 2}, true);
    CHECK(shuffled.gaps == r.gaps);
    CHECK(shuffled.stats.n_dropped_nonpositive == 1);

    const auto unsorted = interarrivals_from_timestamps({0, 3, 1, 4}, false);
    CHECK(unsorted.gaps == std::vector<double>{3, 3});
    CHECK(unsorted.stats.n_dropped_nonpositive == 1);
}

TEST_CASE("load_interarrivals") {
    TempDir tmp;
    SUBCASE("epoch seconds by column name") {
        const auto f = tmp.write("a.csv", "id,ts,label\n1,0,a\n2,2,b\n3,5,c\n4,5,d\n5,9,e\n");
        TimestampSeriesSpec spec;
        spec.path = f;
        spec.column = std::string("ts");
        spec.format = TimestampFormat::epoch_seconds;
        const auto r = load_interarrivals(spec);
        CHECK(r.gaps == std::vector<double>{2, 3, 4});
        CHECK(r.stats.n_raw == 5);
        CHECK(r.stats.n_raw == r.stats.n_gaps + 1 + r.stats.n_unparseable + r.stats.n_filtered_out);
        CHECK(r.stats.n_gaps == r.stats.n_valid + r.stats.n_dropped_nonpositive);
        CHECK(r.stats.time_unit == "seconds");
    }
    SUBCASE("ISO with date filter and a bad row within tolerance") {
        std::string text = "timeStamp,desc\n";
        for (int k = 0; k < 120; ++k) {
            const int day = k < 60 ? 10 : 11;
            char buf[64];
            std::snprintf(buf, sizeof buf, "2015-12-%02d %02d:%02d:%02d,\"row, %d\"\n", day,
                          k % 24, (7 * k) % 60, (13 * k) % 60, k);
            text += buf;
        }
        text += "not a date,x\n";
        const auto f = tmp.write("b.csv", text);
        TimestampSeriesSpec spec;
        spec.path = f;
        spec.column = std::string("timeStamp");
        spec.date_filter = "2015-12-10";
        const auto r = load_interarrivals(spec);
        CHECK(r.stats.n_raw == 121);
        CHECK(r.stats.n_unparseable == 1);
        CHECK(r.stats.n_filtered_out == 60);
        CHECK(r.stats.n_raw == r.stats.n_gaps + 1 + r.stats.n_unparseable + r.stats.n_filtered_out);
        CHECK(r.stats.n_gaps == r.stats.n_valid + r.stats.n_dropped_nonpositive);
        for (double g : r.gaps) {
            CHECK(g > 0.0);
        }

        spec.max_bad_fraction = 0.001;
        CHECK_THROWS_AS((void)load_interarrivals(spec), ConfigError);
    }
    SUBCASE("microseconds without a header") {
        const auto f = tmp.write("c.csv", "1000000\n1000250\n1000900\n");
        TimestampSeriesSpec spec;
        spec.path = f;
        spec.has_header = false;
        spec.format = TimestampFormat::epoch_micros;
        const auto r = load_interarrivals(spec);
        CHECK(r.gaps == std::vector<double>{250, 650});
        CHECK(r.stats.time_unit == "microseconds");
    }
    SUBCASE("errors") {
        const auto f = tmp.write("d.csv", "ts\n1\n2\n");
        TimestampSeriesSpec spec;
        spec.path = f;
        spec.format = TimestampFormat::epoch_seconds;
        spec.column = std::string("nope");
        CHECK_THROWS_AS((void)load_interarrivals(spec), ConfigError);
        spec.column = std::size_t{3};
        CHECK_THROWS_AS((void)load_interarrivals(spec), ConfigError);
        spec.path = tmp.path / "missing.csv";
        CHECK_THROWS((void)load_interarrivals(spec));
        CHECK_THROWS_AS((void)parse_timestamp_format("unix"), ConfigError);
        CHECK(parse_timestamp_format("epoch_micros") == TimestampFormat::epoch_micros);
    }
}

TEST_CASE("make_windows") {
    std::vector<double> gaps(12);
    std::iota(gaps.begin(), gaps.end(), 1.0);
    const auto w = make_windows(gaps, 10);
    CHECK(w.windows.rows() == 3);
    CHECK(w.windows(2, 0) == 3.0);
    CHECK(make_windows(std::span(gaps).first(10), 10).windows.rows() == 1);
    CHECK_THROWS_AS((void)make_windows(std::span(gaps).first(9), 10), ConfigError);
    CHECK_THROWS_AS((void)make_windows(gaps, 2), ConfigError);
    CHECK_THROWS_AS((void)make_windows(gaps, 5, 0), ConfigError);
    CHECK(make_windows(gaps, 5, 3).windows.rows() == 3);
    CHECK(make_windows(gaps, 4, 4).windows.rows() == 3);

    // coverage: first element of each window, then the tail of the last one
    std::vector<double> rebuilt;
    for (std::size_t r = 0; r < w.windows.rows(); ++r) {
        rebuilt.push_back(w.windows(r, 0));
    }
    const auto last = w.windows.row(w.windows.rows() - 1);
    rebuilt.insert(rebuilt.end(), last.begin() + 1, last.end());
    CHECK(rebuilt == gaps);
}

TEST_CASE("label_windows_with_mom") {
    const auto path = simulate_path({1.5, 0.7}, 5000, 31);
    const auto ws = make_windows(path.inter_arrivals, 50);
    const auto lw = label_windows_with_mom(ws);
    CHECK(lw.dataset.size() + lw.n_excluded == ws.windows.rows());
    std::vector<double> betas;
    for (std::size_t r = 0; r < lw.dataset.size(); ++r) {
        betas.push_back(lw.dataset.labels(r, 1));
    }
    std::nth_element(betas.begin(), betas.begin() + betas.size() / 2, betas.end());
    CHECK(std::abs(betas[betas.size() / 2] - 0.7) < 0.15);

    for (std::size_t k = 0; k < lw.dataset.size(); k += 97) {
        const auto e = mom_estimate(ws.windows.row(lw.kept_windows[k]));
        CHECK(lw.dataset.labels(k, 0) == e.mu_hat);
        CHECK(lw.dataset.labels(k, 1) == e.beta_hat);
    }

    const auto again = label_windows_with_mom(make_windows(path.inter_arrivals, 50), {}, 3);
    CHECK(again.dataset.labels == lw.dataset.labels);

    const auto stats = nlohmann::json::parse(ingest_stats_json(ws, lw));
    CHECK(stats["n_windows"] == ws.windows.rows());
    CHECK(stats["window_len"] == 50);

    const std::vector<double> constant(30, 2.0);
    CHECK_THROWS_AS((void)label_windows_with_mom(make_windows(constant, 10)), ConfigError);
}
