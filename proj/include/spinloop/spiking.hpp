#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "spinloop/binary_matrix.hpp"
#include "spinloop/device.hpp"
#include "spinloop/mlp.hpp"
#include "spinloop/random.hpp"

namespace spinloop::nettrain {

/// Binary input events over discrete time-steps for one rate-coded image.
struct SpikeTrain {
    BinaryMatrix events;  // t_steps x n_pixels
    std::size_t t_steps = 0;
};

/// Poisson rate coding: per pixel and step, spike with probability
/// intensity/255 * rate_scale. rate_scale 1.0 corresponds to a 1 ms step at
/// the 1000/s maximum rate, so a full-intensity pixel spikes every step.
inline SpikeTrain poisson_encode(std::span<const double> image, std::size_t t_steps,
                                 std::mt19937_64& rng, double rate_scale = 1.0) {
    if (t_steps < 1) throw std::invalid_argument("poisson_encode: t_steps must be >= 1");
    std::vector<double> prob(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = image[i];
        if (!(v >= 0.0 && v <= 255.0))
            throw std::invalid_argument("poisson_encode: intensity outside [0, 255]");
        prob[i] = std::min(1.0, v / 255.0 * rate_scale);
    }
    SpikeTrain train;
    train.t_steps = t_steps;
    train.events = BinaryMatrix(t_steps, image.size());
    for (std::size_t t = 0; t < t_steps; ++t) {
        std::uint8_t* row = train.events.row(t);
        for (std::size_t i = 0; i < image.size(); ++i)
            row[i] = uniform01(rng) < prob[i] ? 1 : 0;
    }
    return train;
}

inline SpikeTrain poisson_encode(std::span<const std::uint8_t> image, std::size_t t_steps,
                                 std::mt19937_64& rng, double rate_scale = 1.0) {
    std::vector<double> as_double(image.begin(), image.end());
    return poisson_encode(std::span<const double>(as_double), t_steps, rng, rate_scale);
}

/// One hardware neuron in an inference bank: the drive calibration the
/// network assumes (write current = drive.i_bias + z * drive.i_delta) and the
/// actual device answering the pulses. The two differ whenever device-to-
/// device variation or deliberate miscalibration is in play.
struct HardwareNeuron {
    device::DeviceParams drive;
    device::Device dev;
};

/// Per-layer neuron banks covering all hidden and output neurons of an Mlp.
struct NeuronBank {
    std::vector<std::vector<HardwareNeuron>> layers;

    void validate_for(const Mlp& mlp) const {
        if (layers.size() != mlp.layer_count())
            throw std::invalid_argument("NeuronBank: layer count does not match network");
        for (std::size_t l = 0; l < layers.size(); ++l)
            if (layers[l].size() != static_cast<std::size_t>(mlp.weights[l].cols()))
                throw std::invalid_argument("NeuronBank: missing per-neuron device parameters");
    }
};

/// Ideal bank: every neuron driven and realized with the same nominal
/// parameters, so the hardware path computes sigma(z) exactly in expectation.
inline NeuronBank make_ideal_bank(const Mlp& mlp, const device::DeviceParams& nominal,
                                  std::uint64_t seed) {
    NeuronBank bank;
    std::uint64_t stream = 0;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        std::vector<HardwareNeuron> layer;
        const auto n = static_cast<std::size_t>(mlp.weights[l].cols());
        for (std::size_t j = 0; j < n; ++j)
            layer.push_back(HardwareNeuron{
                nominal, device::Device{nominal, device::DeviceState{derive_seed(seed, stream++)}}});
        bank.layers.push_back(std::move(layer));
    }
    return bank;
}

/// Varied bank: drives assume the width-law nominal calibration while the
/// actual devices are drawn via sample_device, so each neuron carries a fixed
/// unknown offset of u * i_bias/i_delta sigmoid units.
inline NeuronBank make_varied_bank(const Mlp& mlp, const device::DeviceGeometry& geometry,
                                   const device::ScalingLaw& bias_law,
                                   const device::ScalingLaw& delta_law, std::mt19937_64& sample_rng,
                                   std::uint64_t state_seed) {
    const device::DeviceParams nominal = device::nominal_device(geometry, bias_law, delta_law);
    NeuronBank bank;
    std::uint64_t stream = 0;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        std::vector<HardwareNeuron> layer;
        const auto n = static_cast<std::size_t>(mlp.weights[l].cols());
        for (std::size_t j = 0; j < n; ++j) {
            device::DeviceParams actual = device::sample_device(geometry, bias_law, delta_law, sample_rng);
            layer.push_back(HardwareNeuron{
                nominal, device::Device{actual, device::DeviceState{derive_seed(state_seed, stream++)}}});
        }
        bank.layers.push_back(std::move(layer));
    }
    return bank;
}

struct InferenceResult {
    int predicted_class = 0;
    std::vector<std::uint64_t> spike_counts;
};

/// Optional per-layer spike recording (for synaptic energy accounting).
struct SpikeRecord {
    std::vector<BinaryMatrix> per_layer;  // t_steps x layer width, indexed like bank.layers
};

/// Rate-coded inference through device neurons: at each step every neuron is
/// reset, then pulsed at drive.i_bias + z * drive.i_delta, and emits 1 iff it
/// switched. Predicted class is the argmax of output spike counts (ties break
/// to the lowest class index). Devices consume one draw per neuron per step.
inline InferenceResult stochastic_inference(const Mlp& mlp, const SpikeTrain& train,
                                            NeuronBank& bank, SpikeRecord* record = nullptr) {
    mlp.validate();
    bank.validate_for(mlp);
    if (train.events.cols != static_cast<std::size_t>(mlp.input_size()))
        throw std::invalid_argument("stochastic_inference: spike train width mismatch");

    const std::size_t n_layers = mlp.layer_count();
    if (record) {
        record->per_layer.clear();
        for (std::size_t l = 0; l < n_layers; ++l)
            record->per_layer.emplace_back(train.t_steps,
                                           static_cast<std::size_t>(mlp.weights[l].cols()));
    }

    std::vector<std::uint64_t> counts(static_cast<std::size_t>(mlp.output_size()), 0);
    std::vector<std::uint8_t> layer_in;
    std::vector<std::uint8_t> layer_out;

    for (std::size_t t = 0; t < train.t_steps; ++t) {
        layer_in.assign(train.events.row(t), train.events.row(t) + train.events.cols);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto& w = mlp.weights[l];
            const auto n_out = static_cast<std::size_t>(w.cols());
            // z = W^T s + b, accumulated over active input rows only.
            Vector z = mlp.biases[l];
            for (std::size_t i = 0; i < layer_in.size(); ++i)
                if (layer_in[i]) z += w.row(static_cast<Eigen::Index>(i)).transpose();

            layer_out.assign(n_out, 0);
            auto& neurons = bank.layers[l];
            for (std::size_t j = 0; j < n_out; ++j) {
                auto& neuron = neurons[j];
                device::apply_reset_pulse(neuron.dev.state);
                const double i_write =
                    neuron.drive.i_bias_a + z[static_cast<Eigen::Index>(j)] * neuron.drive.i_delta_a;
                const bool switched =
                    device::apply_write_pulse(neuron.dev.state, neuron.dev.params, i_write);
                layer_out[j] = switched ? 1 : 0;
                if (record) record->per_layer[l](t, j) = layer_out[j];
            }
            layer_in = layer_out;
        }
        for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += layer_in[j];
    }

    InferenceResult result;
    result.spike_counts = std::move(counts);
    std::size_t best = 0;
    for (std::size_t j = 1; j < result.spike_counts.size(); ++j)
        if (result.spike_counts[j] > result.spike_counts[best]) best = j;
    result.predicted_class = static_cast<int>(best);
    return result;
}

}  // namespace spinloop::nettrain
