// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cupmu/common.hpp"
#include "cupmu/nn.hpp"

namespace cupmu {

/// Isotropic 2-D Gaussian clusters, one per class.
struct GaussianMixtureSpec {
    std::vector<std::array<double, 2>> centers;
    std::vector<double> stds;
    std::size_t samples_total = 0;
    std::uint64_t seed = 0;

    void validate() const {
        require(!centers.empty(), ErrorCode::Config, "mixture needs at least one cluster");
        require(centers.size() == stds.size(), ErrorCode::Config, "centers and stds differ in length");
        for (double s : stds) require(s >= 0.0 && std::isfinite(s), ErrorCode::Config, "stds must be non-negative");
        require(samples_total > 0, ErrorCode::Config, "samples_total must be positive");
    }

    std::size_t num_classes() const noexcept { return centers.size(); }

    /// Per-class counts as even as possible; earlier classes take the remainder.
    std::vector<std::size_t> class_counts() const {
        const std::size_t k = centers.size();
        std::vector<std::size_t> counts(k, samples_total / k);
        for (std::size_t i = 0; i < samples_total % k; ++i) ++counts[i];
        return counts;
    }

    static GaussianMixtureSpec toy(std::uint64_t seed = 0) {
        return {{{-2.0, 2.0}, {-6.0, 6.0}, {5.5, 4.0}, {-4.0, -4.0}, {5.0, -1.0}},
                {1.5, 1.0, 1.5, 1.5, 1.5},
                2000,
                seed};
    }
};

inline LabeledDataset make_gaussian_dataset(const GaussianMixtureSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const auto counts = spec.class_counts();
    Vec features;
    features.reserve(2 * spec.samples_total);
    std::vector<int> labels;
    labels.reserve(spec.samples_total);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t n = 0; n < counts[c]; ++n) {
            const double dx = unit(rng), dy = unit(rng);
            if (spec.stds[c] == 0.0) {
                features.push_back(spec.centers[c][0]);
                features.push_back(spec.centers[c][1]);
            } else {
                features.push_back(spec.centers[c][0] + spec.stds[c] * dx);
                features.push_back(spec.centers[c][1] + spec.stds[c] * dy);
            }
            labels.push_back(static_cast<int>(c));
        }
    }
    return {2, std::move(features), std::move(labels)};
}

/// Forget/remain partition of a source dataset. The index lists refer to
/// rows of the source.
struct ForgetSplit {
    LabeledDataset forget;
    LabeledDataset remain;
    std::set<int> forget_classes;
    std::vector<std::size_t> forget_indices;
    std::vector<std::size_t> remain_indices;
};

inline ForgetSplit split_by_indices(const LabeledDataset& data, std::vector<std::size_t> forget_idx,
                                    std::set<int> forget_classes) {
    std::vector<std::uint8_t> in_forget(data.size(), 0);
    for (auto i : forget_idx) {
        require(i < data.size(), ErrorCode::Config, "forget index out of range");
        in_forget[i] = 1;
    }
    std::vector<std::size_t> remain_idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!in_forget[i]) remain_idx.push_back(i);
    require(!forget_idx.empty(), ErrorCode::EmptyDataset, "forget set is empty");
    require(!remain_idx.empty(), ErrorCode::EmptyDataset, "remain set is empty");
    ForgetSplit s;
    s.forget = data.subset(forget_idx);
    s.remain = data.subset(remain_idx);
    s.forget_classes = std::move(forget_classes);
    s.forget_indices = std::move(forget_idx);
    s.remain_indices = std::move(remain_idx);
    return s;
}

inline ForgetSplit split_class_wise(const LabeledDataset& data, const std::set<int>& forget_classes,
                                    std::size_t num_classes) {
    require(!forget_classes.empty(), ErrorCode::Config, "forget_classes is empty");
    for (int c : forget_classes)
        require(c >= 0 && static_cast<std::size_t>(c) < num_classes, ErrorCode::Config,
                "unknown class index " + std::to_string(c));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (forget_classes.count(data.label(i))) idx.push_back(i);
    return split_by_indices(data, std::move(idx), forget_classes);
}

/// Uniformly selects ceil(fraction * N) rows without replacement.
inline ForgetSplit split_random_subset(const LabeledDataset& data, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, ErrorCode::Config, "random forget fraction must be in (0,1)");
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    return split_by_indices(data, std::move(perm), {});
}

/// Random subset of `remain` of the given size, without replacement.
inline LabeledDataset sample_remain_proxy(const LabeledDataset& remain, std::size_t size, std::uint64_t seed) {
    require(size >= 1, ErrorCode::Config, "proxy size must be positive");
    require(size <= remain.size(), ErrorCode::Config, "proxy size exceeds the remain set");
    std::vector<std::size_t> perm(remain.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(size);
    return remain.subset(perm);
}

/// Drops every row whose label is in `classes`.
inline LabeledDataset without_classes(const LabeledDataset& data, const std::set<int>& classes) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!classes.count(data.label(i))) keep.push_back(i);
    return data.subset(keep);
}

// ---- CSV ------------------------------------------------------------------

inline std::string dataset_to_csv(const LabeledDataset& data) {
    std::string out;
    for (std::size_t c = 0; c < data.cols(); ++c) out += "x" + std::to_string(c) + ",";
    out += "label\n";
    char buf[64];
    for (std::size_t n = 0; n < data.size(); ++n) {
        for (double v : data.row(n)) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            out += buf;
        }
        out += std::to_string(data.label(n)) + "\n";
    }
    return out;
}

inline LabeledDataset dataset_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::Io, "dataset CSV is empty");
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    require(cols >= 1 && line.rfind("label") == line.size() - 5, ErrorCode::Io, "bad dataset CSV header");
    Vec features;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        for (std::size_t c = 0; c < cols; ++c) {
            require(static_cast<bool>(std::getline(row, cell, ',')), ErrorCode::Io,
                    "short row at line " + std::to_string(lineno));
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw Error(ErrorCode::Io, "bad number at line " + std::to_string(lineno));
            }
            require(used == cell.size(), ErrorCode::Io, "bad number at line " + std::to_string(lineno));
            features.push_back(v);
        }
        require(static_cast<bool>(std::getline(row, cell)), ErrorCode::Io,
                "missing label at line " + std::to_string(lineno));
        try {
            labels.push_back(std::stoi(cell));
        } catch (const std::exception&) {
            throw Error(ErrorCode::Io, "bad label at line " + std::to_string(lineno));
        }
    }
    return {cols, std::move(features), std::move(labels)};
}

inline void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
    f << dataset_to_csv(data);
    require(static_cast<bool>(f), ErrorCode::Io, "write failed: " + path);
}

inline LabeledDataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return dataset_from_csv(ss.str());
}

}  // namespace cupmu
