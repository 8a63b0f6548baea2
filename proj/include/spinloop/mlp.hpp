#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "spinloop/random.hpp"

namespace spinloop::nettrain {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Dense feedforward network with sigmoid activations at every layer.
/// weights[l] is (fan_in x fan_out); biases[l] has fan_out entries.
struct Mlp {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    std::size_t layer_count() const { return weights.size(); }
    Eigen::Index input_size() const { return weights.front().rows(); }
    Eigen::Index output_size() const { return weights.back().cols(); }

    void validate() const {
        if (weights.empty() || weights.size() != biases.size())
            throw std::invalid_argument("Mlp: weight/bias layer mismatch");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (biases[l].size() != weights[l].cols())
                throw std::invalid_argument("Mlp: bias length does not match layer width");
            if (l > 0 && weights[l].rows() != weights[l - 1].cols())
                throw std::invalid_argument("Mlp: layer shapes do not chain");
            if (!weights[l].allFinite() || !biases[l].allFinite())
                throw std::invalid_argument("Mlp: non-finite parameter");
        }
    }
};

struct TrainConfig {
    int epochs = 40;
    int batch_size = 100;
    double learning_rate = 2.0;
    double momentum = 0.5;
    double dropout = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw std::invalid_argument("TrainConfig: dropout must lie in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    }
};

/// Training/evaluation data: images scaled to [0,1], one row per example.
struct Dataset {
    Matrix images;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
};

inline Matrix sigmoid(const Matrix& z) {
    return z.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
}

/// Uniform init in +/- 4*sqrt(6/(fan_in+fan_out)), the usual scaling for
/// sigmoid units; biases start at zero.
inline Mlp make_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least 2 layers");
    std::mt19937_64 rng(seed);
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double limit = 4.0 * std::sqrt(6.0 / double(fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) = uniform_range(rng, -limit, limit);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(Vector::Zero(fan_out));
    }
    return mlp;
}

/// Plain forward pass (no dropout); rows of x are examples.
inline Matrix forward(const Mlp& mlp, const Matrix& x) {
    Matrix a = x;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l)
        a = sigmoid((a * mlp.weights[l]).rowwise() + mlp.biases[l].transpose());
    return a;
}

inline double accuracy(const Mlp& mlp, const Dataset& data) {
    const Matrix out = forward(mlp, data.images);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        Eigen::Index best = 0;
        out.row(r).maxCoeff(&best);
        if (best == data.labels[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(out.rows());
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

/// Mean-squared-error backprop against one-hot targets. dropout_masks, when
/// provided, holds one 0/1 matrix per hidden layer (batch x width) applied to
/// that layer's activations during the forward pass.
inline Gradients backprop(const Mlp& mlp, const Matrix& x, const Matrix& targets,
                          const std::vector<Matrix>* dropout_masks, double* loss_out) {
    const std::size_t n_layers = mlp.layer_count();
    std::vector<Matrix> activations(n_layers + 1);
    activations[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        activations[l + 1] =
            sigmoid((activations[l] * mlp.weights[l]).rowwise() + mlp.biases[l].transpose());
        if (dropout_masks && l + 1 < n_layers)
            activations[l + 1] = activations[l + 1].cwiseProduct((*dropout_masks)[l]);
    }

    const double inv_batch = 1.0 / static_cast<double>(x.rows());
    const Matrix error = targets - activations[n_layers];
    if (loss_out) *loss_out = 0.5 * error.squaredNorm() * inv_batch;

    Gradients grads;
    grads.weights.resize(n_layers);
    grads.biases.resize(n_layers);

    // delta at the output: dL/dz = -(y - a) .* a(1-a)
    Matrix delta = (-error).cwiseProduct(
        activations[n_layers].cwiseProduct(Matrix::Ones(error.rows(), error.cols()) -
                                           activations[n_layers]));
    for (std::size_t l = n_layers; l-- > 0;) {
        grads.weights[l] = activations[l].transpose() * delta * inv_batch;
        grads.biases[l] = delta.colwise().sum().transpose() * inv_batch;
        if (l > 0) {
            Matrix da = delta * mlp.weights[l].transpose();
            if (dropout_masks) da = da.cwiseProduct((*dropout_masks)[l - 1]);
            delta = da.cwiseProduct(activations[l].cwiseProduct(
                Matrix::Ones(da.rows(), da.cols()) - activations[l]));
        }
    }
    return grads;
}

inline Matrix one_hot(const std::vector<std::uint8_t>& labels, const std::vector<std::size_t>& idx,
                      Eigen::Index n_classes) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), n_classes);
    for (std::size_t r = 0; r < idx.size(); ++r) y(static_cast<Eigen::Index>(r), labels[idx[r]]) = 1.0;
    return y;
}

struct TrainResult {
    Mlp mlp;
    double test_accuracy = 0.0;
    std::vector<double> epoch_losses;
};

/// Mini-batch SGD with momentum on MSE, dropout masks on the hidden layers
/// during training. Deterministic given config.seed. Returned weights are
/// inference-ready: the dropout retention factor is folded into each layer
/// that consumes a dropped activation, so a plain forward pass (and the
/// spiking conversion, which emits binary hidden outputs) needs no further
/// scaling.
inline TrainResult train_baseline(const Dataset& train, const Dataset& test,
                                  const std::vector<int>& layer_sizes, const TrainConfig& config) {
    config.validate();
    if (train.size() == 0) throw std::invalid_argument("train_baseline: empty training set");

    Mlp mlp = make_mlp(layer_sizes, derive_seed(config.seed, 0));
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
    std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));

    std::vector<Matrix> velocity_w;
    std::vector<Vector> velocity_b;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        velocity_w.push_back(Matrix::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
        velocity_b.push_back(Vector::Zero(mlp.biases[l].size()));
    }

    const Eigen::Index n_classes = static_cast<Eigen::Index>(layer_sizes.back());
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_in_place(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - start);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + count);

            Matrix x(static_cast<Eigen::Index>(count), train.images.cols());
            for (std::size_t r = 0; r < count; ++r)
                x.row(static_cast<Eigen::Index>(r)) = train.images.row(static_cast<Eigen::Index>(idx[r]));
            const Matrix y = one_hot(train.labels, idx, n_classes);

            std::vector<Matrix> masks;
            const std::vector<Matrix>* masks_ptr = nullptr;
            if (config.dropout > 0.0) {
                for (std::size_t l = 0; l + 1 < mlp.layer_count(); ++l) {
                    Matrix m(x.rows(), mlp.weights[l].cols());
                    for (Eigen::Index i = 0; i < m.rows(); ++i)
                        for (Eigen::Index j = 0; j < m.cols(); ++j)
                            m(i, j) = uniform01(dropout_rng) >= config.dropout ? 1.0 : 0.0;
                    masks.push_back(std::move(m));
                }
                masks_ptr = &masks;
            }

            double loss = 0.0;
            const Gradients grads = backprop(mlp, x, y, masks_ptr, &loss);
            loss_sum += loss;
            ++batch_count;

            for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
                velocity_w[l] = config.momentum * velocity_w[l] + config.learning_rate * grads.weights[l];
                velocity_b[l] = config.momentum * velocity_b[l] + config.learning_rate * grads.biases[l];
                mlp.weights[l] -= velocity_w[l];
                mlp.biases[l] -= velocity_b[l];
            }
        }
        epoch_losses.push_back(batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0);
    }

    // Fold the dropout retention factor into each consuming layer.
    if (config.dropout > 0.0)
        for (std::size_t l = 1; l < mlp.layer_count(); ++l)
            mlp.weights[l] *= (1.0 - config.dropout);

    TrainResult result;
    result.test_accuracy = test.size() ? accuracy(mlp, test) : 0.0;
    result.mlp = std::move(mlp);
    result.epoch_losses = std::move(epoch_losses);
    return result;
}

}  // namespace spinloop::nettrain
