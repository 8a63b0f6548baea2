#pragma once

// Shared test utilities: synthetic datasets, temp files, misbehaving backends.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spinloop/backend.hpp"
#include "spinloop/mlp.hpp"
#include "spinloop/mnist.hpp"
#include "spinloop/random.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("spinloop_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Synthetic class-blob images: class c lights up its own pixel block with
/// per-image jitter plus sparse background speckle. Linearly separable, so
/// small networks train in a few epochs.
inline spinloop::nettrain::Dataset synth_dataset(int per_class, int n_classes, int dim,
                                                 std::uint64_t seed) {
    using spinloop::uniform01;
    using spinloop::uniform_below;
    std::mt19937_64 rng(seed);
    const int n = per_class * n_classes;
    spinloop::nettrain::Dataset data;
    data.images = spinloop::nettrain::Matrix::Zero(n, dim);
    data.labels.resize(n);
    const int block = dim / n_classes;
    int row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (int k = 0; k < per_class; ++k, ++row) {
            data.labels[row] = static_cast<std::uint8_t>(c);
            for (int p = c * block; p < (c + 1) * block; ++p)
                data.images(row, p) = 0.6 + 0.4 * uniform01(rng);
            for (int s = 0; s < dim / 16; ++s) {
                const auto p = static_cast<int>(uniform_below(rng, dim));
                data.images(row, p) = std::min(1.0, data.images(row, p) + 0.3 * uniform01(rng));
            }
        }
    }
    return data;
}

/// Harder variant: sparse class prototypes with per-image pixel dropout and
/// cross-class bleed, so held-out images land near the decision boundary
/// (small logit margins, the few-shot digit regime).
inline spinloop::nettrain::Dataset synth_overlapping_dataset(int per_class, int n_classes,
                                                             int dim, std::uint64_t seed,
                                                             double keep_prob = 0.6,
                                                             double bleed = 0.25) {
    using spinloop::uniform01;
    using spinloop::uniform_below;
    using spinloop::uniform_range;
    std::mt19937_64 proto_rng(spinloop::derive_seed(seed, 1));
    std::vector<std::vector<double>> prototypes(n_classes, std::vector<double>(dim, 0.0));
    for (auto& proto : prototypes)
        for (auto& v : proto)
            if (uniform01(proto_rng) < 0.2) v = uniform_range(proto_rng, 0.6, 1.0);

    std::mt19937_64 rng(spinloop::derive_seed(seed, 2));
    const int n = per_class * n_classes;
    spinloop::nettrain::Dataset data;
    data.images = spinloop::nettrain::Matrix::Zero(n, dim);
    data.labels.resize(n);
    int row = 0;
    for (int c = 0; c < n_classes; ++c)
        for (int k = 0; k < per_class; ++k, ++row) {
            data.labels[row] = static_cast<std::uint8_t>(c);
            for (int p = 0; p < dim; ++p) {
                double v = 0.0;
                if (prototypes[c][p] > 0.0 && uniform01(rng) < keep_prob)
                    v = prototypes[c][p] * uniform_range(rng, 0.75, 1.05);
                if (uniform01(rng) < bleed) {
                    const int other =
                        (c + 1 + static_cast<int>(uniform_below(rng, n_classes - 1))) % n_classes;
                    if (prototypes[other][p] > 0.0) v = std::max(v, prototypes[other][p] * 0.9);
                }
                data.images(row, p) = std::min(1.0, v);
            }
        }
    return data;
}

inline spinloop::mnist::MnistSet dataset_to_mnist(const spinloop::nettrain::Dataset& data,
                                                  const std::vector<int>& digit_labels) {
    spinloop::mnist::MnistSet set;
    set.count = data.size();
    set.images.resize(set.count * spinloop::mnist::kImagePixels);
    set.labels.resize(set.count);
    for (std::size_t i = 0; i < set.count; ++i) {
        set.labels[i] = static_cast<std::uint8_t>(digit_labels[data.labels[i]]);
        for (std::size_t c = 0; c < spinloop::mnist::kImagePixels; ++c)
            set.images[i * spinloop::mnist::kImagePixels + c] = static_cast<std::uint8_t>(
                data.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * 255.0);
    }
    return set;
}

/// Same blobs packaged as an MNIST-shaped byte set with chosen digit labels
/// (for exercising the HIL selection/ingestion paths without real data).
inline spinloop::mnist::MnistSet synth_mnist(const std::vector<int>& digit_labels, int per_class,
                                             std::uint64_t seed) {
    const int n_classes = static_cast<int>(digit_labels.size());
    const auto data =
        synth_dataset(per_class, n_classes, static_cast<int>(spinloop::mnist::kImagePixels), seed);
    spinloop::mnist::MnistSet set;
    set.count = data.size();
    set.images.resize(set.count * spinloop::mnist::kImagePixels);
    set.labels.resize(set.count);
    for (std::size_t i = 0; i < set.count; ++i) {
        set.labels[i] = static_cast<std::uint8_t>(digit_labels[data.labels[i]]);
        for (std::size_t c = 0; c < spinloop::mnist::kImagePixels; ++c)
            set.images[i * spinloop::mnist::kImagePixels + c] = static_cast<std::uint8_t>(
                data.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * 255.0);
    }
    return set;
}

/// Backend whose reset pulse does nothing, so the post-reset read disagrees
/// once the device has switched.
class StuckResetBackend final : public spinloop::DeviceBackend {
public:
    StuckResetBackend(const spinloop::device::DeviceParams& params, std::uint64_t seed)
        : dev_{params, spinloop::device::DeviceState{seed}} {}

    void reset() override {}  // broken on purpose
    void write(double i_write_a) override {
        spinloop::device::apply_write_pulse(dev_.state, dev_.params, i_write_a);
    }
    double read() override {
        return spinloop::device::read_hall(dev_.state, dev_.params).r_ahe_ohm;
    }
    void seed(std::uint64_t s) override { dev_.state.reseed(s); }

private:
    spinloop::device::Device dev_;
};

/// Backend pinned to one state: never switches (a = 0) or always reads as
/// switched (a = 1), for exercising saturated-surrogate paths.
class PinnedBackend final : public spinloop::DeviceBackend {
public:
    explicit PinnedBackend(bool always_switch) : always_switch_(always_switch) {}

    void reset() override { switched_ = false; }
    void write(double) override { switched_ = always_switch_; }
    double read() override { return switched_ ? -20.0 : 20.0; }
    void seed(std::uint64_t) override {}

private:
    bool always_switch_;
    bool switched_ = false;
};

}  // namespace testutil
