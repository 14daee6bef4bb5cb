// fpp: simulate, fit and compare fractional Poisson process estimators.
//
// Exit codes: 0 success, 2 usage/configuration/missing input, 3 numerical failure.

#include "fpp/dataset_io.hpp"
#include "fpp/experiments.hpp"
#include "fpp/ingest.hpp"
#include "fpp/neural.hpp"
#include "fpp/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#ifndef FPP_VERSION
#define FPP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) {
        throw fpp::FormatError("cannot open " + p.string());
    }
    return {std::istreambuf_iterator<char>(in), {}};
}

// Accepts a file, or a dataset stem whose sidecar exists.
const auto kExistingInput = CLI::Validator(
    [](std::string& s) -> std::string {
        if (fs::exists(s) || fs::exists(s + ".json")) {
            return {};
        }
        return "input not found: " + s;
    },
    "PATH");

struct Run {
    fs::path out;
    unsigned threads{0};
    std::uint64_t seed{0};
    std::vector<fs::path> outputs;
    json seeds = json::object();
    json resolved = json::object();

    void produced(const fs::path& p) { outputs.push_back(p); }
    fs::path at(const std::string& name) const { return out / name; }
};

void write_json(Run& run, const std::string& name, const std::string& text) {
    fpp::write_file_atomic(run.at(name), text);
    run.produced(run.at(name));
}

std::vector<std::size_t> read_test_rows(const std::string& split_path) {
    const json j = json::parse(read_text(split_path));
    return j.at("test").get<std::vector<std::size_t>>();
}

fpp::LabeledDataset select_rows(const fpp::LabeledDataset& data, const std::string& split_path) {
    if (split_path.empty()) {
        return data;
    }
    const auto rows = read_test_rows(split_path);
    for (auto r : rows) {
        if (r >= data.size()) {
            throw fpp::ConfigError("split file refers to row " + std::to_string(r) +
                                   " beyond the dataset");
        }
    }
    return data.subset(rows);
}

struct ModelOptions {
    std::size_t hidden{16};
    std::size_t fc{32};
    std::string input_activation{"relu"};
    bool log_input{false};

    void add(CLI::App* cmd) {
        cmd->add_option("--hidden", hidden, "LSTM hidden units")->capture_default_str();
        cmd->add_option("--fc", fc, "fully connected width")->capture_default_str();
        cmd->add_option("--input-activation", input_activation, "relu or none")
            ->check(CLI::IsMember({"relu", "none"}))
            ->capture_default_str();
        cmd->add_flag("--log-input", log_input, "feed ln(inter-arrival) instead of raw values");
    }
    fpp::ModelConfig config(std::uint64_t seed) const {
        fpp::ModelConfig c;
        c.hidden_dim = hidden;
        c.fc_dim = fc;
        c.input_activation =
            input_activation == "none" ? fpp::InputActivation::none : fpp::InputActivation::relu;
        c.input_transform = log_input ? fpp::InputTransform::log : fpp::InputTransform::raw;
        c.seed = seed;
        return c;
    }
};

struct TrainOptions {
    std::size_t epochs{100};
    double lr{1e-3};
    std::size_t batch{64};
    double split{0.8};
    double validation{0.1};
    double max_grad_norm{0.0};

    void add(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs)->capture_default_str();
        cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        cmd->add_option("--batch", batch, "mini-batch size")->capture_default_str();
        cmd->add_option("--split", split, "train share of the rows")->capture_default_str();
        cmd->add_option("--val-fraction", validation, "share of the train rows held out for checkpointing")
            ->capture_default_str();
        cmd->add_option("--max-grad-norm", max_grad_norm, "clip gradient L2 norm (0 = off)")
            ->capture_default_str();
    }
    fpp::TrainSpec spec(std::uint64_t seed, unsigned threads) const {
        fpp::TrainSpec s;
        s.epochs = epochs;
        s.lr = lr;
        s.batch_size = batch;
        s.split_fraction = split;
        s.validation_fraction = validation;
        s.max_grad_norm = max_grad_norm;
        s.shuffle_seed = seed;
        s.threads = threads;
        return s;
    }
};

json dataset_spec_json(const fpp::DatasetSpec& d) {
    return {{"n_samples", d.n_samples},
            {"seq_len", d.seq_len},
            {"mu_range", {d.mu_range.lo, d.mu_range.hi}},
            {"beta_range", {d.beta_range.lo, d.beta_range.hi}},
            {"seed", d.seed}};
}

json train_spec_json(const fpp::TrainSpec& t) {
    return {{"split_fraction", t.split_fraction},
            {"validation_fraction", t.validation_fraction},
            {"epochs", t.epochs},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"shuffle_seed", t.shuffle_seed},
            {"max_grad_norm", t.max_grad_norm},
            {"threads", t.threads}};
}

json model_config_json(const fpp::ModelConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden_dim", c.hidden_dim},
            {"fc_dim", c.fc_dim},
            {"output_dim", c.output_dim},
            {"input_activation", fpp::to_string(c.input_activation)},
            {"input_transform", fpp::to_string(c.input_transform)},
            {"seed", c.seed}};
}

// simulate -------------------------------------------------------------------

struct SimulateArgs {
    std::size_t n{100000};
    std::size_t seq_len{50};
    std::pair<double, double> mu_range{0.5, 5.0};
    std::pair<double, double> beta_range{0.1, 0.9};
};

void run_simulate(Run& run, const SimulateArgs& a) {
    fpp::DatasetSpec spec;
    spec.n_samples = a.n;
    spec.seq_len = a.seq_len;
    spec.mu_range = {a.mu_range.first, a.mu_range.second};
    spec.beta_range = {a.beta_range.first, a.beta_range.second};
    spec.seed = run.seed;
    spec.validate();
    run.seeds["dataset"] = run.seed;
    run.resolved = dataset_spec_json(spec);
    const auto ds = fpp::generate_dataset(spec, run.threads);
    fpp::save_dataset(ds, run.at("dataset"));
    run.produced(run.at("dataset.bin"));
    run.produced(run.at("dataset.json"));
}

// train ----------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    ModelOptions model;
    TrainOptions train;
};

void run_train(Run& run, const TrainArgs& a) {
    const auto data = fpp::load_dataset(a.data);
    const auto spec = a.train.spec(run.seed, run.threads);
    const auto config = a.model.config(run.seed);
    run.seeds["shuffle"] = run.seed;
    run.seeds["weight_init"] = fpp::derive_seed(run.seed, fpp::streams::weight_init);
    run.resolved = {{"data", a.data}, {"train", train_spec_json(spec)}, {"model", model_config_json(config)}};

    const auto res = fpp::train(data, spec, config, [](const fpp::EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << "  train " << r.train_loss << "  val " << r.val_loss
                  << '\n';
    });

    fpp::save_model(run.at("model.bin"), res.best);
    run.produced(run.at("model.bin"));
    fpp::save_model(run.at("model_final.bin"), res.final_weights, &res.optimizer);
    run.produced(run.at("model_final.bin"));

    fpp::write_file_atomic(run.at("loss_curve.csv"), fpp::loss_curve_csv(res.curve));
    run.produced(run.at("loss_curve.csv"));
    write_json(run, "split.json",
               json{{"train", res.split.train},
                    {"validation", res.split.validation},
                    {"test", res.split.test},
                    {"best_epoch", res.best_epoch}}
                       .dump() +
                   "\n");

    const auto test = data.subset(res.split.test);
    auto report = fpp::evaluate(fpp::lstm_predictor(res.best, run.threads), test);
    report.wall_clock_train = res.wall_clock_seconds;
    write_json(run, "report.json", fpp::report_json(report));
}

// eval / compare -------------------------------------------------------------

struct EvalArgs {
    std::string model;
    std::string data;
    std::string split;
    std::size_t batch{64};
    std::size_t reps{20};
};

void run_eval(Run& run, const EvalArgs& a) {
    const auto model = fpp::load_model(a.model);
    const auto test = select_rows(fpp::load_dataset(a.data), a.split);
    const auto report =
        fpp::evaluate(fpp::lstm_predictor(model.weights, run.threads), test, a.batch, a.reps);
    write_json(run, "report.json", fpp::report_json(report));
}

struct CompareArgs {
    EvalArgs eval;
    std::size_t timing_rows{2000};
    double beta_lo{0.01};
    double beta_hi{1.0};
};

void run_compare(Run& run, const CompareArgs& a) {
    const auto model = fpp::load_model(a.eval.model);
    const auto test = select_rows(fpp::load_dataset(a.eval.data), a.eval.split);
    fpp::ClipPolicy clip;
    clip.beta_lo = a.beta_lo;
    clip.beta_hi = a.beta_hi;
    // Timing is single-threaded for both estimators.
    const auto rep = fpp::compare_with_mom(fpp::lstm_predictor(model.weights, 1), test, clip,
                                           a.timing_rows, a.eval.reps);
    write_json(run, "comparison.json", fpp::comparison_json(rep));
    std::cout << "lstm_mse " << rep.lstm_mse << "  mom_mse " << rep.mom_mse << "  improvement "
              << rep.improvement << "  speed_ratio " << rep.speed_ratio << '\n';
}

// ablate ---------------------------------------------------------------------

struct AblateArgs {
    std::string axis;
    std::vector<double> values;
    std::size_t n{5000};
    std::size_t seq_len{50};
    ModelOptions model;
    TrainOptions train;
};

void run_ablate(Run& run, const AblateArgs& a) {
    const auto axis = fpp::parse_axis(a.axis);
    const auto values = a.values.empty() ? fpp::default_ablation_values(axis) : a.values;
    fpp::AblationBase base;
    base.data.n_samples = a.n;
    base.data.seq_len = a.seq_len;
    base.data.seed = run.seed;
    base.train = a.train.spec(run.seed, run.threads);
    base.model = a.model.config(run.seed);
    run.seeds["dataset"] = run.seed;
    run.seeds["shuffle"] = run.seed;
    run.seeds["weight_init"] = fpp::derive_seed(run.seed, fpp::streams::weight_init);
    run.resolved = {{"axis", fpp::to_string(axis)},
                    {"values", values},
                    {"data", dataset_spec_json(base.data)},
                    {"train", train_spec_json(base.train)},
                    {"model", model_config_json(base.model)}};

    const auto grid = fpp::run_ablation(axis, values, base, [](const fpp::AblationCell& c) {
        std::cerr << "value " << c.value << "  rmse " << c.report.overall.rmse << '\n';
    });
    const std::string stem = "ablation_" + fpp::to_string(axis);
    fpp::write_file_atomic(run.at(stem + ".csv"), fpp::ablation_csv(grid));
    run.produced(run.at(stem + ".csv"));
    json cells = json::array();
    for (const auto& c : grid.cells) {
        cells.push_back({{"value", c.value}, {"report", json::parse(fpp::report_json(c.report))}});
    }
    write_json(run, stem + ".json",
               json{{"axis", fpp::to_string(axis)}, {"cells", cells}}.dump(2) + "\n");
}

// ingest ---------------------------------------------------------------------

struct IngestArgs {
    std::string file;
    std::string column{"0"};
    std::string format{"iso_datetime"};
    std::size_t window{50};
    std::size_t stride{1};
    std::string date_filter;
    char delimiter{','};
    bool no_header{false};
    bool no_sort{false};
    double max_bad_fraction{0.01};
};

void run_ingest(Run& run, const IngestArgs& a) {
    fpp::TimestampSeriesSpec spec;
    spec.path = a.file;
    spec.format = fpp::parse_timestamp_format(a.format);
    spec.delimiter = a.delimiter;
    spec.has_header = !a.no_header;
    spec.sort = !a.no_sort;
    spec.max_bad_fraction = a.max_bad_fraction;
    if (!a.date_filter.empty()) {
        spec.date_filter = a.date_filter;
    }
    const bool numeric =
        !a.column.empty() && a.column.find_first_not_of("0123456789") == std::string::npos;
    if (numeric) {
        spec.column = static_cast<std::size_t>(std::stoull(a.column));
    } else {
        spec.column = a.column;
    }

    const auto gaps = fpp::load_interarrivals(spec);
    const auto windows = fpp::make_windows(gaps.gaps, a.window, a.stride, gaps.stats);
    const auto labeled = fpp::label_windows_with_mom(windows, {}, run.threads);
    fpp::save_dataset(labeled.dataset, run.at("dataset"));
    run.produced(run.at("dataset.bin"));
    run.produced(run.at("dataset.json"));
    write_json(run, "ingest_stats.json", fpp::ingest_stats_json(windows, labeled));
}

// study ----------------------------------------------------------------------

struct StudyArgs {
    double mu{2.622};
    double beta{0.520};
    std::size_t paths{1000};
    std::size_t seq_len{30};
    std::string model;
};

void run_study(Run& run, const StudyArgs& a) {
    std::optional<fpp::SavedModel> model;
    if (!a.model.empty()) {
        model = fpp::load_model(a.model);
    }
    run.seeds["study_paths"] = run.seed;
    const auto s = fpp::sampling_distribution_study({a.mu, a.beta}, a.paths, a.seq_len, run.seed,
                                                    model ? &model->weights : nullptr);
    write_json(run, "study.json", fpp::study_json(s));
}

// manifest -------------------------------------------------------------------

json options_snapshot(const CLI::App* cmd) {
    json cfg = json::object();
    for (const CLI::Option* opt : cmd->get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") {
            continue;
        }
        const std::string key = opt->get_lnames().front();
        if (opt->count() > 0) {
            const auto& res = opt->results();
            cfg[key] = res.size() == 1 ? json(res.front()) : json(res);
        } else if (!opt->get_default_str().empty()) {
            cfg[key] = opt->get_default_str();
        } else {
            cfg[key] = nullptr;
        }
    }
    return cfg;
}

void write_manifest(const Run& run, const CLI::App* cmd, const std::vector<std::string>& argv,
                    const std::string& started) {
    json outputs = json::array();
    for (const auto& p : run.outputs) {
        outputs.push_back({{"path", p.filename().string()}, {"bytes", fs::file_size(p)}});
    }
    const json manifest{{"tool", "fpp"},
                        {"tool_version", FPP_VERSION},
                        {"command", cmd->get_name()},
                        {"argv", argv},
                        {"options", options_snapshot(cmd)},
                        {"resolved", run.resolved},
                        {"threads", fpp::resolve_threads(run.threads)},
                        {"seeds", {{"root", run.seed}, {"derived", run.seeds}}},
                        {"started_utc", started},
                        {"finished_utc", utc_now()},
                        {"outputs", outputs}};
    fpp::write_file_atomic(run.out / "manifest.json", manifest.dump(2) + "\n");
}

void write_diagnostic(const fs::path& out, const json& j) {
    std::cerr << j.dump(2) << '\n';
    std::error_code ec;
    if (!out.empty() && fs::is_directory(out, ec)) {
        fpp::write_file_atomic(out / "diagnostic.json", j.dump(2) + "\n");
    }
}

// `args` excludes the program name.
int run_cli(std::vector<std::string> args);

int run_replay(const std::string& manifest_path, const std::string& out) {
    const json m = json::parse(read_text(manifest_path));
    auto argv = m.at("argv").get<std::vector<std::string>>();
    bool replaced = false;
    for (std::size_t k = 0; k + 1 < argv.size(); ++k) {
        if (argv[k] == "--out") {
            argv[k + 1] = out;
            replaced = true;
        }
    }
    if (!replaced) {
        argv.push_back("--out");
        argv.push_back(out);
    }
    return run_cli(argv);
}

int run_cli(std::vector<std::string> args) {
    CLI::App app{"Fractional Poisson process simulation and parameter estimation", "fpp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", FPP_VERSION);

    Run run;
    std::string out;
    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out, "output directory")->required();
        cmd->add_option("--seed", run.seed, "root seed for every random stream")->capture_default_str();
        cmd->add_option("--threads", run.threads, "worker threads (0 = all cores)")
            ->capture_default_str();
    };

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "generate a labeled synthetic dataset");
    c_sim->add_option("--n", sim.n, "number of windows")->capture_default_str();
    c_sim->add_option("--seq-len", sim.seq_len, "inter-arrivals per window")->capture_default_str();
    c_sim->add_option("--mu-range", sim.mu_range, "lo hi")->default_str("0.5 5.0");
    c_sim->add_option("--beta-range", sim.beta_range, "lo hi")->default_str("0.1 0.9");
    common(c_sim);

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "train the LSTM regressor on a dataset");
    c_train->add_option("--data", tr.data, "dataset stem or sidecar")->required()->check(kExistingInput);
    tr.model.add(c_train);
    tr.train.add(c_train);
    common(c_train);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "evaluate a model on a dataset");
    c_eval->add_option("--model", ev.model)->required()->check(kExistingInput);
    c_eval->add_option("--data", ev.data)->required()->check(kExistingInput);
    c_eval->add_option("--split", ev.split, "split.json from train; evaluates its test rows")
        ->check(kExistingInput);
    c_eval->add_option("--batch", ev.batch, "timing batch size")->capture_default_str();
    c_eval->add_option("--reps", ev.reps, "timing repetitions")->capture_default_str();
    common(c_eval);

    CompareArgs cmp;
    auto* c_cmp = app.add_subcommand("compare", "compare the model against the MOM estimator");
    c_cmp->add_option("--model", cmp.eval.model)->required()->check(kExistingInput);
    c_cmp->add_option("--data", cmp.eval.data)->required()->check(kExistingInput);
    c_cmp->add_option("--split", cmp.eval.split, "split.json from train; compares on its test rows")
        ->check(kExistingInput);
    c_cmp->add_option("--timing-rows", cmp.timing_rows)->capture_default_str();
    c_cmp->add_option("--reps", cmp.eval.reps, "timing repetitions")->capture_default_str();
    c_cmp->add_option("--beta-clip", cmp.beta_lo, "lower beta clamp")->capture_default_str();
    common(c_cmp);

    AblateArgs abl;
    auto* c_abl = app.add_subcommand("ablate", "sweep one training setting");
    c_abl->add_option("--axis", abl.axis, "epochs, samples, seq_len, lr, hidden or batch")->required();
    c_abl->add_option("--values", abl.values, "grid values (default: the standard grid)");
    c_abl->add_option("--n", abl.n, "windows per cell")->capture_default_str();
    c_abl->add_option("--seq-len", abl.seq_len)->capture_default_str();
    abl.model.add(c_abl);
    abl.train.add(c_abl);
    common(c_abl);

    IngestArgs ing;
    auto* c_ing = app.add_subcommand("ingest", "window and MOM-label a timestamp CSV");
    c_ing->add_option("--file", ing.file)->required()->check(CLI::ExistingFile);
    c_ing->add_option("--column", ing.column, "header name or 0-based index")->capture_default_str();
    c_ing->add_option("--format", ing.format)
        ->check(CLI::IsMember({"iso_datetime", "epoch_seconds", "epoch_micros"}))
        ->capture_default_str();
    c_ing->add_option("--window", ing.window)->capture_default_str();
    c_ing->add_option("--stride", ing.stride)->capture_default_str();
    c_ing->add_option("--date-filter", ing.date_filter, "keep rows on this YYYY-MM-DD");
    c_ing->add_option("--delimiter", ing.delimiter)->capture_default_str();
    c_ing->add_flag("--no-header", ing.no_header);
    c_ing->add_flag("--no-sort", ing.no_sort);
    c_ing->add_option("--max-bad-fraction", ing.max_bad_fraction)->capture_default_str();
    common(c_ing);

    StudyArgs st;
    auto* c_st = app.add_subcommand("study", "sampling distribution of both estimators at one point");
    c_st->add_option("--mu", st.mu)->capture_default_str();
    c_st->add_option("--beta", st.beta)->capture_default_str();
    c_st->add_option("--paths", st.paths)->capture_default_str();
    c_st->add_option("--seq-len", st.seq_len)->capture_default_str();
    c_st->add_option("--model", st.model)->check(kExistingInput);
    common(c_st);

    std::string manifest_in;
    std::string replay_out;
    auto* c_rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    c_rep->add_option("--manifest", manifest_in)->required()->check(CLI::ExistingFile);
    c_rep->add_option("--out", replay_out)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (c_rep->parsed()) {
        try {
            return run_replay(manifest_in, replay_out);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitUsage;
        }
    }

    CLI::App* cmd = app.get_subcommands().front();
    run.out = out;
    const std::string started = utc_now();
    const std::vector<std::string>& argv = args;

    try {
        fs::create_directories(run.out);
        if (cmd == c_sim) {
            run_simulate(run, sim);
        } else if (cmd == c_train) {
            run_train(run, tr);
        } else if (cmd == c_eval) {
            run_eval(run, ev);
        } else if (cmd == c_cmp) {
            run_compare(run, cmp);
        } else if (cmd == c_abl) {
            run_ablate(run, abl);
        } else if (cmd == c_ing) {
            run_ingest(run, ing);
        } else if (cmd == c_st) {
            run_study(run, st);
        }
        write_manifest(run, cmd, argv, started);
    } catch (const fpp::TrainingDiverged& e) {
        write_diagnostic(run.out, {{"error", "training_diverged"},
                                   {"message", e.what()},
                                   {"epoch", e.epoch()},
                                   {"batch", e.batch()}});
        return kExitNumerical;
    } catch (const fpp::NumericalError& e) {
        write_diagnostic(run.out, {{"error", "numerical"}, {"message", e.what()}});
        return kExitNumerical;
    } catch (const fpp::ConvergenceError& e) {
        write_diagnostic(run.out, {{"error", "convergence"}, {"message", e.what()}});
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv + (argc > 0 ? 1 : 0), argv + argc));
}
