#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinloop/backend.hpp"
#include "spinloop/mnist.hpp"
#include "spinloop/spiking.hpp"

namespace spinloop::hiltrain {

struct HilConfig {
    std::size_t t_steps = 100;
    std::vector<int> classes = {0, 2, 4, 6};
    int train_per_class = 4;
    int epochs = 10;
    double learning_rate = 0.5;
    std::uint64_t seed = 1;
    double rate_scale = 1.0;

    void validate() const {
        if (t_steps < 1) throw std::invalid_argument("HilConfig: t_steps must be >= 1");
        if (classes.empty()) throw std::invalid_argument("HilConfig: need at least one class");
        std::set<int> unique(classes.begin(), classes.end());
        if (unique.size() != classes.size())
            throw std::invalid_argument("HilConfig: classes must be distinct");
    }
};

/// One output neuron: the drive calibration the pulsing scheme assumes, and
/// the backend that answers reset/write/read (simulated or over the wire).
struct HilNeuron {
    device::DeviceParams drive;
    std::shared_ptr<DeviceBackend> backend;
};

/// Single-layer feedforward network feeding C hardware neurons.
struct HilNetwork {
    nettrain::Matrix weights;  // inputs x C
    std::vector<HilNeuron> neurons;

    void validate() const {
        if (neurons.empty()) throw std::invalid_argument("HilNetwork: no neurons attached");
        if (static_cast<std::size_t>(weights.cols()) != neurons.size())
            throw std::invalid_argument("HilNetwork: one backend handle per logical neuron");
        for (const auto& n : neurons)
            if (!n.backend) throw std::invalid_argument("HilNetwork: null backend handle");
        if (!weights.allFinite()) throw std::invalid_argument("HilNetwork: non-finite weights");
    }
};

/// Weights uniform in +/- 1/sqrt(n_inputs), seeded.
inline HilNetwork make_hil_network(std::size_t n_inputs, std::vector<HilNeuron> neurons,
                                   std::uint64_t weight_seed) {
    HilNetwork net;
    net.weights.resize(static_cast<Eigen::Index>(n_inputs),
                       static_cast<Eigen::Index>(neurons.size()));
    std::mt19937_64 rng(weight_seed);
    const double limit = 1.0 / std::sqrt(static_cast<double>(n_inputs));
    for (Eigen::Index i = 0; i < net.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < net.weights.cols(); ++j)
            net.weights(i, j) = uniform_range(rng, -limit, limit);
    net.neurons = std::move(neurons);
    net.validate();
    return net;
}

/// Bias-current miscalibration: the actual device sits at nominal*(1+u) with
/// u uniform in [-delta, +delta] while the drive keeps assuming the nominal.
inline device::DeviceParams with_bias_variation(device::DeviceParams params, double delta,
                                                std::mt19937_64& rng) {
    params.i_bias_a *= 1.0 + uniform_range(rng, -delta, delta);
    return params;
}

/// Labeled image subset for the HIL task.
struct HilDataset {
    nettrain::Matrix images;       // rows x n_pixels, unit scale
    std::vector<int> class_slots;  // position of the label within config.classes
    std::vector<int> labels;       // original digit labels
    std::vector<std::uint64_t> image_ids;

    std::size_t size() const { return class_slots.size(); }
};

/// First `per_class` images of each requested class, in dataset order.
inline HilDataset select_hil_images(const mnist::MnistSet& set, const std::vector<int>& classes,
                                    int per_class) {
    std::vector<std::size_t> chosen;
    for (int cls : classes) {
        int found = 0;
        for (std::size_t i = 0; i < set.count && found < per_class; ++i) {
            if (set.label(i) == cls) {
                chosen.push_back(i);
                ++found;
            }
        }
        if (found < per_class) {
            std::ostringstream msg;
            msg << "dataset has fewer than " << per_class << " images of class " << cls;
            throw std::runtime_error(msg.str());
        }
    }
    std::sort(chosen.begin(), chosen.end());

    HilDataset out;
    out.images.resize(static_cast<Eigen::Index>(chosen.size()),
                      static_cast<Eigen::Index>(mnist::kImagePixels));
    for (std::size_t r = 0; r < chosen.size(); ++r) {
        const auto img = set.image(chosen[r]);
        for (std::size_t c = 0; c < mnist::kImagePixels; ++c)
            out.images(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                img[c] / 255.0;
        const int label = set.label(chosen[r]);
        const auto slot = std::find(classes.begin(), classes.end(), label) - classes.begin();
        out.class_slots.push_back(static_cast<int>(slot));
        out.labels.push_back(label);
        out.image_ids.push_back(chosen[r]);
    }
    return out;
}

namespace detail {

inline constexpr std::uint64_t kEncodeStream = 0xe2c0de;

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline nettrain::SpikeTrain encode_image(const Eigen::Ref<const nettrain::Matrix>& images,
                                         std::size_t row, const HilConfig& config,
                                         std::mt19937_64& rng) {
    std::vector<double> intensities(static_cast<std::size_t>(images.cols()));
    for (std::size_t c = 0; c < intensities.size(); ++c)
        intensities[c] =
            images(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) * 255.0;
    return nettrain::poisson_encode(std::span<const double>(intensities), config.t_steps, rng,
                                    config.rate_scale);
}

inline std::vector<double> input_rates(const nettrain::SpikeTrain& train) {
    std::vector<double> rates(train.events.cols, 0.0);
    for (std::size_t t = 0; t < train.events.rows; ++t) {
        const std::uint8_t* row = train.events.row(t);
        for (std::size_t i = 0; i < rates.size(); ++i) rates[i] += row[i];
    }
    const double inv_t = 1.0 / static_cast<double>(train.t_steps);
    for (auto& r : rates) r *= inv_t;
    return rates;
}

}  // namespace detail

/// One rate-coded image through the hardware: per step and neuron, the
/// backend runs reset -> read (confirm RESET) -> write(i_bias + z*i_delta) ->
/// read; a switch is a post-write read that differs from the post-reset read.
/// Activations are switch counts divided by t_steps. The first post-reset
/// read of each neuron fixes its RESET-state resistance; later mismatches
/// abort with a protocol fault.
inline std::vector<double> hil_forward(const nettrain::SpikeTrain& train, HilNetwork& net,
                                       const HilConfig& config) {
    net.validate();
    config.validate();
    if (train.t_steps != config.t_steps)
        throw std::invalid_argument("hil_forward: spike train length does not match config");
    if (train.events.cols != static_cast<std::size_t>(net.weights.rows()))
        throw std::invalid_argument("hil_forward: spike train width does not match weights");

    const std::size_t n_neurons = net.neurons.size();
    std::vector<std::uint64_t> switch_counts(n_neurons, 0);
    std::vector<double> reset_ref(n_neurons, 0.0);
    std::vector<bool> have_ref(n_neurons, false);

    for (std::size_t t = 0; t < train.t_steps; ++t) {
        const std::uint8_t* spikes = train.events.row(t);
        nettrain::Vector z = nettrain::Vector::Zero(static_cast<Eigen::Index>(n_neurons));
        for (std::size_t i = 0; i < train.events.cols; ++i)
            if (spikes[i]) z += net.weights.row(static_cast<Eigen::Index>(i)).transpose();

        for (std::size_t j = 0; j < n_neurons; ++j) {
            auto& neuron = net.neurons[j];
            neuron.backend->reset();
            const double r0 = neuron.backend->read();
            if (!have_ref[j]) {
                reset_ref[j] = r0;
                have_ref[j] = true;
            } else if (r0 != reset_ref[j]) {
                std::ostringstream msg;
                msg << "hil_forward: reset not confirmed on neuron " << j << " at step " << t
                    << " (expected r=" << reset_ref[j] << " ohm, read " << r0 << ")";
                throw ProtocolFault(msg.str());
            }
            const double i_write = neuron.drive.i_bias_a +
                                   z[static_cast<Eigen::Index>(j)] * neuron.drive.i_delta_a;
            neuron.backend->write(i_write);
            const double r1 = neuron.backend->read();
            if (r1 != r0) ++switch_counts[j];
        }
    }

    std::vector<double> activations(n_neurons);
    for (std::size_t j = 0; j < n_neurons; ++j)
        activations[j] =
            static_cast<double>(switch_counts[j]) / static_cast<double>(train.t_steps);
    return activations;
}

/// One online-update epoch: per image, encode -> hil_forward -> squared-error
/// loss L = 1/2 * sum_j (a_j - y_j)^2 -> immediate update
///   dw_ij = -lr * (a_j - y_j) * a_j (1 - a_j) * rbar_i,
/// with rbar the mean input spike rate (expected-sigmoid surrogate through
/// the stochastic neuron). Returns the mean loss over the epoch. Transcript
/// records, when requested, are one JSON line per image.
inline double hil_train_epoch(const HilDataset& data, HilNetwork& net, const HilConfig& config,
                              std::mt19937_64& encode_rng, int epoch_index = 0,
                              std::ostream* transcript = nullptr) {
    net.validate();
    config.validate();
    double loss_sum = 0.0;
    for (std::size_t img = 0; img < data.size(); ++img) {
        const nettrain::SpikeTrain train = detail::encode_image(data.images, img, config, encode_rng);
        const std::vector<double> a = hil_forward(train, net, config);
        const std::vector<double> rates = detail::input_rates(train);

        double loss = 0.0;
        std::vector<double> grad(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double y = data.class_slots[img] == static_cast<int>(j) ? 1.0 : 0.0;
            const double err = a[j] - y;
            loss += 0.5 * err * err;
            grad[j] = err * a[j] * (1.0 - a[j]);
        }
        loss_sum += loss;

        for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
            const double r = rates[static_cast<std::size_t>(i)];
            if (r == 0.0) continue;
            for (Eigen::Index j = 0; j < net.weights.cols(); ++j)
                net.weights(i, j) -= config.learning_rate * grad[static_cast<std::size_t>(j)] * r;
        }

        if (transcript) {
            nlohmann::json rec{{"epoch", epoch_index},
                               {"image_id", data.image_ids[img]},
                               {"label", data.labels[img]},
                               {"activations", a},
                               {"loss", loss}};
            *transcript << rec.dump() << "\n";
        }
    }
    return data.size() ? loss_sum / static_cast<double>(data.size()) : 0.0;
}

struct TrainOutcome {
    std::vector<double> epoch_losses;
};

/// Full HIL training run; the encode stream is keyed on config.seed so a
/// software-reference run with the same config consumes identical spikes.
inline TrainOutcome hil_train(const HilDataset& data, HilNetwork& net, const HilConfig& config,
                              std::ostream* transcript = nullptr) {
    std::mt19937_64 encode_rng(derive_seed(config.seed, detail::kEncodeStream));
    TrainOutcome outcome;
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        outcome.epoch_losses.push_back(
            hil_train_epoch(data, net, config, encode_rng, epoch, transcript));
    return outcome;
}

enum class InferMode {
    NetworkInput,  // confidence from normalized mean pre-activations (default)
    DeviceCounts,  // confidence from hardware switch-count activations
};

struct InferResult {
    int class_slot = 0;
    std::vector<double> confidences;
    std::vector<double> z_bar;
};

namespace detail {

inline std::vector<double> shift_normalize(std::vector<double> v) {
    const double lo = *std::min_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto& x : v) {
        x -= lo;
        sum += x;
    }
    if (sum <= 0.0) {
        std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
        return v;
    }
    for (auto& x : v) x /= sum;
    return v;
}

}  // namespace detail

/// Inference per the confidence definition: encode the image, take the mean
/// pre-activation zbar_j over the t_steps, shift-normalize into confidences,
/// and assign the class with the highest confidence (ties to lowest index).
/// DeviceCounts mode instead runs the hardware forward pass and ranks the
/// measured activations.
inline InferResult hil_infer(const Eigen::Ref<const nettrain::Matrix>& image_row, HilNetwork& net,
                             const HilConfig& config, std::mt19937_64& encode_rng,
                             InferMode mode = InferMode::NetworkInput) {
    net.validate();
    const nettrain::SpikeTrain train = detail::encode_image(image_row, 0, config, encode_rng);
    const std::vector<double> rates = detail::input_rates(train);

    InferResult result;
    result.z_bar.assign(net.neurons.size(), 0.0);
    for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
        const double r = rates[static_cast<std::size_t>(i)];
        if (r == 0.0) continue;
        for (Eigen::Index j = 0; j < net.weights.cols(); ++j)
            result.z_bar[static_cast<std::size_t>(j)] += net.weights(i, j) * r;
    }

    std::vector<double> score;
    if (mode == InferMode::NetworkInput) {
        score = result.z_bar;
    } else {
        score = hil_forward(train, net, config);
    }
    result.confidences = detail::shift_normalize(score);

    std::size_t best = 0;
    for (std::size_t j = 1; j < score.size(); ++j)
        if (score[j] > score[best]) best = j;
    result.class_slot = static_cast<int>(best);
    return result;
}

/// Software reference: identical data, schedule and update rule, but the
/// activation is the exact sigma(zbar_j) instead of the measured hardware
/// activation. No device is consulted.
inline TrainOutcome software_reference_train(const HilDataset& data, nettrain::Matrix& weights,
                                             const HilConfig& config) {
    config.validate();
    std::mt19937_64 encode_rng(derive_seed(config.seed, detail::kEncodeStream));
    TrainOutcome outcome;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t img = 0; img < data.size(); ++img) {
            const nettrain::SpikeTrain train =
                detail::encode_image(data.images, img, config, encode_rng);
            const std::vector<double> rates = detail::input_rates(train);

            std::vector<double> a(static_cast<std::size_t>(weights.cols()), 0.0);
            for (Eigen::Index i = 0; i < weights.rows(); ++i) {
                const double r = rates[static_cast<std::size_t>(i)];
                if (r == 0.0) continue;
                for (Eigen::Index j = 0; j < weights.cols(); ++j)
                    a[static_cast<std::size_t>(j)] += weights(i, j) * r;
            }
            for (auto& v : a) v = detail::sigmoid(v);

            double loss = 0.0;
            std::vector<double> grad(a.size());
            for (std::size_t j = 0; j < a.size(); ++j) {
                const double y = data.class_slots[img] == static_cast<int>(j) ? 1.0 : 0.0;
                const double err = a[j] - y;
                loss += 0.5 * err * err;
                grad[j] = err * a[j] * (1.0 - a[j]);
            }
            loss_sum += loss;

            for (Eigen::Index i = 0; i < weights.rows(); ++i) {
                const double r = rates[static_cast<std::size_t>(i)];
                if (r == 0.0) continue;
                for (Eigen::Index j = 0; j < weights.cols(); ++j)
                    weights(i, j) -= config.learning_rate * grad[static_cast<std::size_t>(j)] * r;
            }
        }
        outcome.epoch_losses.push_back(
            data.size() ? loss_sum / static_cast<double>(data.size()) : 0.0);
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Time multiplexing: several logical neurons served by one physical device.

namespace detail {

struct MuxShared {
    std::shared_ptr<DeviceBackend> physical;
    std::recursive_mutex mu;
};

/// Virtual handle serializing onto the shared physical backend. A handle
/// acquires the device on reset() and releases it after the second read of
/// the cycle, so reset->read->write->read sequences of different virtual
/// neurons never interleave.
class MultiplexHandle final : public DeviceBackend {
public:
    explicit MultiplexHandle(std::shared_ptr<MuxShared> shared) : shared_(std::move(shared)) {}

    void reset() override {
        if (!lock_.owns_lock()) lock_ = std::unique_lock(shared_->mu);
        reads_since_reset_ = 0;
        ++counts_.resets;
        shared_->physical->reset();
    }

    void write(double i_write_a) override {
        const bool transient = !lock_.owns_lock();
        if (transient) lock_ = std::unique_lock(shared_->mu);
        ++counts_.writes;
        shared_->physical->write(i_write_a);
        if (transient) lock_.unlock();
    }

    double read() override {
        const bool held = lock_.owns_lock();
        if (!held) lock_ = std::unique_lock(shared_->mu);
        ++counts_.reads;
        const double r = shared_->physical->read();
        if (held) {
            if (++reads_since_reset_ >= 2) lock_.unlock();  // cycle complete
        } else {
            lock_.unlock();
        }
        return r;
    }

    void seed(std::uint64_t s) override {
        const bool transient = !lock_.owns_lock();
        if (transient) lock_ = std::unique_lock(shared_->mu);
        ++counts_.seeds;
        shared_->physical->seed(s);
        if (transient) lock_.unlock();
    }

    const BackendCallCounts& counts() const { return counts_; }

private:
    std::shared_ptr<MuxShared> shared_;
    std::unique_lock<std::recursive_mutex> lock_;
    int reads_since_reset_ = 0;
    BackendCallCounts counts_;
};

}  // namespace detail

/// Returns n_virtual handles that serialize all operations onto the single
/// physical backend; with n_virtual = 1 the handle is a pure pass-through.
inline std::vector<std::shared_ptr<DeviceBackend>> time_multiplex_backend(
    std::shared_ptr<DeviceBackend> physical, std::size_t n_virtual) {
    if (n_virtual < 1)
        throw std::invalid_argument("time_multiplex_backend: n_virtual must be >= 1");
    auto shared = std::make_shared<detail::MuxShared>();
    shared->physical = std::move(physical);
    std::vector<std::shared_ptr<DeviceBackend>> handles;
    handles.reserve(n_virtual);
    for (std::size_t k = 0; k < n_virtual; ++k)
        handles.push_back(std::make_shared<detail::MultiplexHandle>(shared));
    return handles;
}

inline const BackendCallCounts& multiplex_counts(const DeviceBackend& handle) {
    return dynamic_cast<const detail::MultiplexHandle&>(handle).counts();
}

}  // namespace spinloop::hiltrain
