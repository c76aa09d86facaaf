#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csc/rng.hpp"

namespace csc {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Split { Train, Val, Test, Unassigned };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        default: return "";
    }
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s.empty()) return Split::Unassigned;
    throw DataError("unknown split value: " + s);
}

struct Sample {
    std::string path;  // relative to the manifest directory
    int label = 0;     // 0 = non-CSC, 1 = CSC
    Split split = Split::Unassigned;
};

struct SplitSpec {
    double train_ratio = 0.8;
    double val_ratio = 0.1;
    double test_ratio = 0.1;
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const {
        if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
            throw DataError("split ratios must sum to 1");
        if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
            throw DataError("split ratios must be positive");
    }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}
}  // namespace detail

// Manifest CSV: header `path,label,split`, paths relative to the manifest directory.
inline std::vector<Sample> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest file: " + path);
    if (auto f = detail::split_csv_line(line); f.size() != 3 || f[0] != "path" || f[1] != "label" || f[2] != "split")
        throw DataError("manifest header must be 'path,label,split'");

    std::vector<Sample> samples;
    std::set<std::string> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 3)
            throw DataError("malformed manifest row at line " + std::to_string(line_no));
        Sample s;
        s.path = f[0];
        if (f[1] != "0" && f[1] != "1")
            throw DataError("label must be 0 or 1 at line " + std::to_string(line_no));
        s.label = f[1] == "1" ? 1 : 0;
        s.split = split_from_string(f[2]);
        if (!seen.insert(s.path).second)
            throw DataError("duplicate path at line " + std::to_string(line_no) + ": " + s.path);
        samples.push_back(std::move(s));
    }
    return samples;
}

inline void save_manifest(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << "path,label,split\n";
    for (const auto& s : samples) out << s.path << "," << s.label << "," << to_string(s.split) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Stratified split: per class, n_val = round(val_ratio * n), n_test = round(test_ratio * n)
// (round half up), the rest train. Membership by seeded shuffle; deterministic.
inline std::vector<Sample> split_dataset(std::vector<Sample> samples, const SplitSpec& spec) {
    spec.validate();
    if (samples.empty()) throw DataError("no samples to split");

    std::map<int, std::vector<std::size_t>> by_class;
    if (spec.stratified) {
        for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    } else {
        for (std::size_t i = 0; i < samples.size(); ++i) by_class[0].push_back(i);
    }

    for (auto& [cls, idx] : by_class) {
        const int n = static_cast<int>(idx.size());
        int n_val = round_half_up(spec.val_ratio * n);
        int n_test = round_half_up(spec.test_ratio * n);
        int n_train = n - n_val - n_test;
        if (n_train < 1 || n_val < 1 || n_test < 1)
            throw DataError("class " + std::to_string(cls) + " too small for the requested split");
        CounterRng rng(spec.seed, static_cast<std::uint64_t>(cls) + 1);
        seeded_shuffle(idx, rng);
        for (int k = 0; k < n; ++k) {
            Split s = k < n_train            ? Split::Train
                      : k < n_train + n_val  ? Split::Val
                                             : Split::Test;
            samples[idx[static_cast<std::size_t>(k)]].split = s;
        }
    }
    return samples;
}

}  // namespace csc
