#include "fpp/dataset_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fpp {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

void append_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>(bits & 0xffU));
        bits >>= 8;
    }
}

double read_le(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) {
        bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    }
    return std::bit_cast<double>(bits);
}

std::filesystem::path sidecar_of(const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        return path;
    }
    auto p = path;
    if (p.extension() == ".bin") {
        p.replace_extension();
    }
    p += ".json";
    return p;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) {
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& stem) {
    ds.validate();
    auto bin_path = stem;
    bin_path += ".bin";
    auto json_path = stem;
    json_path += ".json";

    std::string payload;
    payload.reserve((ds.windows.data().size() + ds.labels.data().size()) * 8);
    for (double v : ds.windows.data()) {
        append_le(payload, v);
    }
    for (double v : ds.labels.data()) {
        append_le(payload, v);
    }
    write_file_atomic(bin_path, payload);

    json header{
        {"format_version", kDatasetFormatVersion},
        {"n_samples", ds.size()},
        {"seq_len", ds.seq_len},
        {"seed", ds.rng_seed},
        {"source", ds.source},
        {"time_unit", ds.time_unit},
        {"encoding", "f64le"},
        {"layout", "windows[n_samples][seq_len] then labels[n_samples][2] (mu, beta)"},
        {"payload", bin_path.filename().string()},
        {"payload_bytes", payload.size()},
    };
    if (ds.spec) {
        header["mu_range"] = {ds.spec->mu_range.lo, ds.spec->mu_range.hi};
        header["beta_range"] = {ds.spec->beta_range.lo, ds.spec->beta_range.hi};
    } else {
        header["mu_range"] = nullptr;
        header["beta_range"] = nullptr;
    }
    write_file_atomic(json_path, header.dump(2) + "\n");
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    const auto json_path = sidecar_of(path);
    std::ifstream in(json_path);
    if (!in) {
        throw FormatError("cannot open dataset header " + json_path.string());
    }
    json header;
    try {
        in >> header;
    } catch (const json::exception& e) {
        throw FormatError("dataset header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("format_version", -1) != kDatasetFormatVersion) {
        throw FormatError("unsupported dataset format_version");
    }

    LabeledDataset ds;
    std::size_t n = 0;
    try {
        n = header.at("n_samples").get<std::size_t>();
        ds.seq_len = header.at("seq_len").get<std::size_t>();
        ds.rng_seed = header.at("seed").get<std::uint64_t>();
        ds.source = header.value("source", "simulated");
        ds.time_unit = header.value("time_unit", "unit");
        if (!header.at("mu_range").is_null()) {
            DatasetSpec spec;
            spec.n_samples = n;
            spec.seq_len = ds.seq_len;
            spec.seed = ds.rng_seed;
            spec.mu_range = {header["mu_range"][0].get<double>(), header["mu_range"][1].get<double>()};
            spec.beta_range = {header["beta_range"][0].get<double>(),
                               header["beta_range"][1].get<double>()};
            ds.spec = spec;
        }
    } catch (const json::exception& e) {
        throw FormatError("dataset header is missing fields: " + std::string(e.what()));
    }

    const auto bin_path = json_path.parent_path() / header.at("payload").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) {
        throw FormatError("cannot open dataset payload " + bin_path.string());
    }
    std::stringstream buffer;
    buffer << bin.rdbuf();
    const std::string bytes = buffer.str();
    const std::size_t expected = (n * ds.seq_len + n * 2) * 8;
    if (bytes.size() != expected) {
        throw FormatError("dataset payload has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
    }

    std::vector<double> windows(n * ds.seq_len);
    std::vector<double> labels(n * 2);
    const char* p = bytes.data();
    for (auto& v : windows) {
        v = read_le(p);
        p += 8;
    }
    for (auto& v : labels) {
        v = read_le(p);
        p += 8;
    }
    ds.windows = Matrix(n, ds.seq_len, std::move(windows));
    ds.labels = Matrix(n, 2, std::move(labels));
    ds.validate();
    return ds;
}

}  // namespace fpp
