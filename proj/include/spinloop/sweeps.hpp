#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spinloop/crossbar.hpp"
#include "spinloop/device.hpp"
#include "spinloop/spiking.hpp"

namespace spinloop::nettrain {

/// Seed-fixed evaluation subset (indices drawn once, then kept in dataset
/// order so encode streams stay comparable across runs).
inline Dataset select_subset(const Dataset& data, std::size_t n, std::uint64_t seed) {
    if (n >= data.size()) return data;
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(derive_seed(seed, 0x5e1ec7));
    shuffle_in_place(idx, rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.images.resize(static_cast<Eigen::Index>(n), data.images.cols());
    out.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        out.images.row(static_cast<Eigen::Index>(r)) = data.images.row(static_cast<Eigen::Index>(idx[r]));
        out.labels[r] = data.labels[idx[r]];
    }
    return out;
}

namespace detail {

/// Encode one dataset row (unit-scale intensities) as a Poisson train.
inline SpikeTrain encode_row(const Dataset& data, std::size_t row, std::size_t t_steps,
                             std::mt19937_64& rng) {
    std::vector<double> intensities(static_cast<std::size_t>(data.images.cols()));
    for (std::size_t c = 0; c < intensities.size(); ++c)
        intensities[c] = data.images(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) * 255.0;
    return poisson_encode(std::span<const double>(intensities), t_steps, rng);
}

inline Mlp perturb_weights(const Mlp& mlp, double delta, std::mt19937_64& rng) {
    Mlp out = mlp;
    if (delta <= 0.0) return out;
    for (auto& w : out.weights)
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) *= 1.0 + uniform_range(rng, -delta, delta);
    return out;
}

}  // namespace detail

/// Rate-coded accuracy of the network through a hardware bank.
inline double stochastic_accuracy(const Mlp& mlp, const Dataset& eval_set, NeuronBank& bank,
                                  std::size_t t_steps, std::mt19937_64& encode_rng,
                                  SpikeRecord* record = nullptr,
                                  std::vector<SpikeRecord>* per_image_records = nullptr) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const SpikeTrain train = detail::encode_row(eval_set, i, t_steps, encode_rng);
        SpikeRecord local;
        const InferenceResult res = stochastic_inference(mlp, train, bank, record ? &local : nullptr);
        if (res.predicted_class == eval_set.labels[i]) ++correct;
        if (per_image_records) per_image_records->push_back(local);
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

struct VariationPoint {
    double width_um;
    double delta;
    int trial;
    double accuracy;
};

/// Fig-3c style sweep: for each (width, delta, trial), devices are sampled
/// around the width-law nominals with fractional variation delta on the bias
/// current, weights are perturbed within the same fractional limit, and the
/// perturbed network is evaluated through the varied hardware. All random
/// streams are keyed on (delta, trial) only, so a given trial is paired
/// across widths: at delta = 0 every width reproduces the identical run.
inline std::vector<VariationPoint> variation_sweep(
    const Mlp& mlp, const Dataset& eval_set, const std::vector<double>& widths,
    const std::vector<double>& deltas, int trials, std::size_t t_steps, std::uint64_t seed,
    const device::ScalingLaw& bias_law_base = device::default_bias_law(),
    const device::ScalingLaw& delta_law_base = device::default_delta_law()) {
    std::vector<VariationPoint> table;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        const double delta = deltas[di];
        if (!(delta >= 0.0 && delta <= 1.0))
            throw std::invalid_argument("variation_sweep: delta must lie in [0, 1]");
        device::ScalingLaw bias_law = bias_law_base;
        bias_law.variation_limit = delta;
        device::ScalingLaw delta_law = delta_law_base;
        delta_law.variation_limit = 0.0;  // only the bias current varies

        for (int trial = 0; trial < trials; ++trial) {
            const std::uint64_t trial_key = derive_seed(seed, di * 1000003ULL + std::uint64_t(trial));
            std::mt19937_64 weight_rng(derive_seed(trial_key, 0));
            const Mlp perturbed = detail::perturb_weights(mlp, delta, weight_rng);

            for (double width : widths) {
                const device::DeviceGeometry geometry(width);
                std::mt19937_64 sample_rng(derive_seed(trial_key, 1));
                NeuronBank bank = make_varied_bank(perturbed, geometry, bias_law, delta_law,
                                                   sample_rng, derive_seed(trial_key, 2));
                std::mt19937_64 encode_rng(derive_seed(trial_key, 3));
                const double acc = stochastic_accuracy(perturbed, eval_set, bank, t_steps, encode_rng);
                table.push_back(VariationPoint{width, delta, trial, acc});
            }
        }
    }
    return table;
}

struct EnergyPoint {
    double width_um;
    double energy_joules = 0.0;
    double energy_normalized = 0.0;
    double accuracy = 0.0;
    std::uint64_t neuron_pulses = 0;
    crossbar::EnergyReport report;
};

/// Fig-3d style sweep: per width, the spike voltage is calibrated to the
/// width's dispersion (v0 = i_delta(w)/g0) and the total synaptic read energy
/// of all layers is accumulated over a rate-coded inference run. Device and
/// encode streams are width-independent, so energies differ only through v0.
/// Energies are reported normalized to the smallest width in the list.
inline std::vector<EnergyPoint> energy_sweep(
    const Mlp& mlp, const Dataset& eval_set, const std::vector<double>& widths, double g0_siemens,
    std::size_t t_steps, std::uint64_t seed,
    const device::ScalingLaw& bias_law = device::default_bias_law(),
    const device::ScalingLaw& delta_law = device::default_delta_law()) {
    if (widths.empty()) return {};
    std::vector<EnergyPoint> points;

    for (double width : widths) {
        const device::DeviceGeometry geometry(width);
        const device::DeviceParams nominal = device::nominal_device(geometry, bias_law, delta_law);
        const double v0 = crossbar::calibrate_v0(nominal.i_delta_a, g0_siemens);

        std::vector<crossbar::SynapseArray> arrays;
        for (const auto& w : mlp.weights)
            arrays.push_back(crossbar::SynapseArray{crossbar::map_weights(w, g0_siemens),
                                                    g0_siemens, v0, device::kWritePulseSeconds});

        NeuronBank bank = make_ideal_bank(mlp, nominal, derive_seed(seed, 1));
        std::mt19937_64 encode_rng(derive_seed(seed, 2));

        EnergyPoint point;
        point.width_um = width;
        crossbar::EnergyReport total;
        total.v0_volts = v0;
        total.g0_siemens = g0_siemens;
        total.per_layer_joules.assign(mlp.layer_count(), 0.0);

        std::size_t correct = 0;
        for (std::size_t img = 0; img < eval_set.size(); ++img) {
            const SpikeTrain train = detail::encode_row(eval_set, img, t_steps, encode_rng);
            SpikeRecord record;
            const InferenceResult res = stochastic_inference(mlp, train, bank, &record);
            if (res.predicted_class == eval_set.labels[img]) ++correct;

            const crossbar::EnergyReport e0 = crossbar::read_energy(arrays[0], train.events);
            total.total_joules += e0.total_joules;
            total.per_layer_joules[0] += e0.total_joules;
            total.events += e0.events;
            for (std::size_t l = 1; l < arrays.size(); ++l) {
                const crossbar::EnergyReport el =
                    crossbar::read_energy(arrays[l], record.per_layer[l - 1]);
                total.total_joules += el.total_joules;
                total.per_layer_joules[l] += el.total_joules;
                total.events += el.events;
            }
            for (std::size_t l = 0; l < mlp.layer_count(); ++l)
                point.neuron_pulses += 2 * t_steps * static_cast<std::size_t>(mlp.weights[l].cols());
        }

        point.energy_joules = total.total_joules;
        point.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());
        point.report = std::move(total);
        points.push_back(std::move(point));
    }

    double e_min = points.front().energy_joules;
    double w_min = points.front().width_um;
    for (const auto& p : points)
        if (p.width_um < w_min) {
            w_min = p.width_um;
            e_min = p.energy_joules;
        }
    for (auto& p : points) p.energy_normalized = e_min > 0.0 ? p.energy_joules / e_min : 0.0;
    return points;
}

}  // namespace spinloop::nettrain
