#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "spinloop/binary_matrix.hpp"

namespace spinloop::crossbar {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Synaptic array: signed conductances g = w * g0 (rows = input lines,
/// columns = neurons), driven by spikes of magnitude v0 for t_read each.
struct SynapseArray {
    Matrix g_siemens;
    double g0_siemens = 1e-6;
    double v0_volts = 1.0;
    double t_read_s = 100e-6;

    void validate() const {
        if (!(g0_siemens > 0.0) || !(v0_volts > 0.0) || !(t_read_s > 0.0))
            throw std::invalid_argument("SynapseArray: g0, v0 and t_read must be positive");
    }
};

/// G_ij = w_ij * g0, sign preserved (negative weights map to the signed
/// ideal-conductance abstraction).
inline Matrix map_weights(const Matrix& weights, double g0_siemens) {
    if (!(g0_siemens > 0.0))
        throw std::invalid_argument("map_weights: g0 must be positive");
    return weights * g0_siemens;
}

/// Column current I_syn = sum_i G_i * v0 * spike_i, accumulated in ascending
/// index order so results are bit-reproducible.
inline double syn_current(const std::vector<double>& g_column,
                          const std::vector<std::uint8_t>& spikes, double v0_volts) {
    if (g_column.size() != spikes.size())
        throw std::invalid_argument("syn_current: conductance/spike dimension mismatch");
    double i_syn = 0.0;
    for (std::size_t i = 0; i < g_column.size(); ++i)
        if (spikes[i]) i_syn += g_column[i] * v0_volts;
    return i_syn;
}

/// Spike voltage that makes one unit of network pre-activation equal one
/// dispersion scale of write current: v0 = i_delta / g0.
inline double calibrate_v0(double i_delta_a, double g0_siemens) {
    if (!(g0_siemens > 0.0))
        throw std::invalid_argument("calibrate_v0: g0 must be positive");
    return i_delta_a / g0_siemens;
}

struct EnergyReport {
    double total_joules = 0.0;
    std::vector<double> per_layer_joules;
    std::uint64_t events = 0;  // spiking input-line instances
    double v0_volts = 0.0;
    double g0_siemens = 0.0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"total_joules", total_joules},
                              {"per_layer", per_layer_joules},
                              {"events", events},
                              {"v0_volts", v0_volts},
                              {"g0_siemens", g0_siemens}};
    }
};

/// Synaptic read energy of one array: every spiking input line dissipates
/// |G_ij| * v0^2 * t_read into each of its synapses (a differential pair
/// conducts in one leg per sign, hence the absolute value).
inline EnergyReport read_energy(const SynapseArray& array, const BinaryMatrix& spike_trains) {
    array.validate();
    const auto n_inputs = static_cast<std::size_t>(array.g_siemens.rows());
    if (spike_trains.cols != n_inputs)
        throw std::invalid_argument("read_energy: spike lines do not match array inputs");

    // Per-input-row total |G|; time loop then reduces in fixed order.
    std::vector<double> row_abs_g(n_inputs, 0.0);
    for (std::size_t i = 0; i < n_inputs; ++i)
        row_abs_g[i] = array.g_siemens.row(static_cast<Eigen::Index>(i)).cwiseAbs().sum();

    const double per_event_scale = array.v0_volts * array.v0_volts * array.t_read_s;
    double energy = 0.0;
    std::uint64_t events = 0;
    for (std::size_t t = 0; t < spike_trains.rows; ++t) {
        const std::uint8_t* row = spike_trains.row(t);
        for (std::size_t i = 0; i < n_inputs; ++i) {
            if (row[i]) {
                energy += row_abs_g[i] * per_event_scale;
                ++events;
            }
        }
    }

    EnergyReport report;
    report.total_joules = energy;
    report.per_layer_joules = {energy};
    report.events = events;
    report.v0_volts = array.v0_volts;
    report.g0_siemens = array.g0_siemens;
    return report;
}

/// Merge per-layer reports (same v0/g0 configuration) into a network total.
inline EnergyReport combine(EnergyReport acc, const EnergyReport& next) {
    acc.total_joules += next.total_joules;
    acc.per_layer_joules.insert(acc.per_layer_joules.end(), next.per_layer_joules.begin(),
                                next.per_layer_joules.end());
    acc.events += next.events;
    if (acc.v0_volts == 0.0) acc.v0_volts = next.v0_volts;
    if (acc.g0_siemens == 0.0) acc.g0_siemens = next.g0_siemens;
    return acc;
}

}  // namespace spinloop::crossbar
