#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratrob/attack.hpp"
#include "stratrob/utility.hpp"

namespace stratrob::data {

/// Labelled examples with a shared feature dimension d and class count K.
struct Dataset {
    std::size_t d = 0;
    std::size_t K = 0;
    std::vector<double> features; // row-major, size() * d
    std::vector<std::size_t> labels;
    std::optional<utility::SemanticPartition> partition;
    std::optional<attack::FeatureBounds> bounds;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> x(std::size_t i) const { return {features.data() + i * d, d}; }
    std::size_t y(std::size_t i) const { return labels[i]; }

    void add(std::span<const double> x, std::size_t y);
    std::vector<std::size_t> class_counts() const;
    Dataset subset(std::span<const std::size_t> indices) const;

    /// Throws DataError on dimension or label violations.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

/// Header "f0,...,f{d-1},label". When num_classes is absent K is max label + 1.
Dataset load_csv(const std::string& path, std::optional<std::size_t> num_classes = std::nullopt);
Dataset parse_csv(const std::string& text, std::optional<std::size_t> num_classes = std::nullopt);
std::string to_csv(const Dataset& ds);
void save_csv(const Dataset& ds, const std::string& path);

struct SynthParams {
    std::size_t K = 6;
    std::size_t d = 5;
    utility::SemanticPartition partition{std::vector<int>{0, 0, 0, 1, 1, 1}};
    double intra_sep = 1.0;
    double inter_sep = 4.0;
    std::size_t n_per_class = 100;
    double noise_sd = 0.5;
    std::uint64_t seed = 0;
};

/// Class means computed by class_means(), plus isotropic Gaussian noise.
Dataset synth_gaussian_groups(const SynthParams& params);

/// Means with same-group pairs intra_sep apart. When d >= K-1 and
/// intra_sep <= inter_sep every cross-group pair is exactly inter_sep apart;
/// otherwise group centroids sit on a regular simplex of edge inter_sep and the
/// groups share one offset subspace, which needs d >= (G-1) + max group size - 1.
std::vector<std::vector<double>> class_means(const SynthParams& params);

struct Split {
    Dataset train;
    Dataset test;
};

/// Stratified seeded split; each class sends round(test_fraction * n_c) examples to test.
Split train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Seeded permutation of [0, n) cut into batches; the last one may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed);

} // namespace stratrob::data
