#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flexkernel/errors.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

// Shortest round-trippable decimal form of a double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// RFC 4180 lines end with CRLF.
inline constexpr const char* kCsvEol = "\r\n";

// ---------------------------------------------------------------------------
// CSV.
// ---------------------------------------------------------------------------

// Streams rows of a fixed column set. All numbers print with full precision,
// so identical runs produce byte-identical files.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw IoError("CsvWriter: cannot open " + path);
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << kCsvEol;
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << kCsvEol;
        if (!out_) throw IoError("CsvWriter: write failed");
    }

private:
    std::ofstream out_;
};

inline void save_csv_matrix(const Tensor& t, const std::string& path) {
    require(t.rank() == 2 || t.rank() == 1, "save_csv_matrix: 1-D or 2-D tensor required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_csv_matrix: cannot open " + path);
    const std::size_t rows = t.rank() == 2 ? t.extent(0) : 1;
    const std::size_t cols = t.rank() == 2 ? t.extent(1) : t.extent(0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c)
            out << (c ? "," : "") << format_double(t[r * cols + c]);
        out << kCsvEol;
    }
    if (!out) throw IoError("save_csv_matrix: write failed for " + path);
}

inline Tensor load_csv_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_csv_matrix: cannot open " + path);
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::strtod(cell.c_str(), nullptr));
            ++c;
        }
        if (rows == 0)
            cols = c;
        else
            require(c == cols, "load_csv_matrix: ragged rows in " + path);
        ++rows;
    }
    require(rows > 0, "load_csv_matrix: empty file " + path);
    return Tensor({rows, cols}, std::move(values));
}

// ---------------------------------------------------------------------------
// PGM image dump.
// ---------------------------------------------------------------------------

// Writes <stem>.pgm (binary P5, min-max normalized to 8 bits; a constant
// image maps to mid-gray 128) and <stem>.csv with the raw values.
inline void dump_image(const Tensor& t, const std::string& stem) {
    require(t.rank() == 2, "dump_image: 2-D tensor required");
    const std::size_t h = t.extent(0), w = t.extent(1);
    double lo = t[0], hi = t[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
        lo = std::min(lo, t[i]);
        hi = std::max(hi, t[i]);
    }
    std::ofstream out(stem + ".pgm", std::ios::binary);
    if (!out) throw IoError("dump_image: cannot open " + stem + ".pgm");
    out << "P5\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        unsigned char px = 128;
        if (hi > lo) px = static_cast<unsigned char>(std::lround((t[i] - lo) / (hi - lo) * 255.0));
        out.put(static_cast<char>(px));
    }
    if (!out) throw IoError("dump_image: write failed for " + stem + ".pgm");
    save_csv_matrix(t, stem + ".csv");
}

// ---------------------------------------------------------------------------
// Content hashing and run manifests.
// ---------------------------------------------------------------------------

// FNV-1a 64-bit; an integrity fingerprint for manifests, not a cryptographic
// hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("hash_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

inline constexpr const char* kVersionTag = "flexkernel 1.0.0";

// Run record: resolved configuration, seed, timing, and the inventory of
// produced files with content hashes. Written even on failure paths once the
// configuration has parsed.
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> config;
    std::uint64_t seed = 0;
    std::string status = "ok";
    double wall_seconds = 0.0;
    std::string started_at;
    std::vector<std::string> files;

    void write(const std::string& dir) const {
        std::ofstream out(dir + "/run_manifest.txt", std::ios::binary);
        if (!out) throw IoError("RunManifest: cannot open " + dir + "/run_manifest.txt");
        out << "version " << kVersionTag << "\n";
        out << "command " << command << "\n";
        out << "status " << status << "\n";
        out << "seed " << seed << "\n";
        out << "started_at " << started_at << "\n";
        out << "wall_seconds " << format_double(wall_seconds) << "\n";
        for (const auto& [k, v] : config) out << "config " << k << "=" << v << "\n";
        for (const auto& f : files)
            out << "file " << f << " " << hash_file(dir + "/" + f) << "\n";
        if (!out) throw IoError("RunManifest: write failed");
    }
};

}  // namespace flexkernel
