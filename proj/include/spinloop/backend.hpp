#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>

#include "spinloop/device.hpp"

namespace spinloop {

/// Raised when a backend violates the reset/write/read contract.
class ProtocolFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Contract every neuron backend honors, whether the device lives in-process
/// or behind the bench wire protocol:
///   - after reset(), read() returns the RESET-state resistance;
///   - write() from RESET switches with the device's own probability;
///   - read() reports the anomalous Hall resistance and never disturbs state.
class DeviceBackend {
public:
    virtual ~DeviceBackend() = default;

    virtual void reset() = 0;
    virtual void write(double i_write_a) = 0;
    virtual double read() = 0;
    virtual void seed(std::uint64_t s) = 0;
};

struct BackendCallCounts {
    std::uint64_t resets = 0;
    std::uint64_t writes = 0;
    std::uint64_t reads = 0;
    std::uint64_t seeds = 0;

    std::uint64_t total() const { return resets + writes + reads + seeds; }
};

/// Pass-through decorator that tallies backend calls.
class CountingBackend final : public DeviceBackend {
public:
    explicit CountingBackend(DeviceBackend& inner) : inner_(inner) {}

    void reset() override {
        ++counts_.resets;
        inner_.reset();
    }
    void write(double i_write_a) override {
        ++counts_.writes;
        inner_.write(i_write_a);
    }
    double read() override {
        ++counts_.reads;
        return inner_.read();
    }
    void seed(std::uint64_t s) override {
        ++counts_.seeds;
        inner_.seed(s);
    }

    const BackendCallCounts& counts() const { return counts_; }

private:
    DeviceBackend& inner_;
    BackendCallCounts counts_;
};

/// In-process backend wrapping a simulated device. The device is held through
/// a shared_ptr so several handles (e.g. time-multiplexed virtual neurons) can
/// drive one physical device through the same stream.
class SimulatedBackend final : public DeviceBackend {
public:
    explicit SimulatedBackend(std::shared_ptr<device::Device> dev) : dev_(std::move(dev)) {
        if (!dev_) throw std::invalid_argument("SimulatedBackend: null device");
        dev_->params.validate();
    }

    SimulatedBackend(const device::DeviceParams& params, std::uint64_t seed)
        : SimulatedBackend(std::make_shared<device::Device>(
              device::Device{params, device::DeviceState{seed}})) {}

    void reset() override { device::apply_reset_pulse(dev_->state); }

    void write(double i_write_a) override {
        last_switched_ = device::apply_write_pulse(dev_->state, dev_->params, i_write_a);
    }

    double read() override {
        return device::read_hall(dev_->state, dev_->params).r_ahe_ohm;
    }

    void seed(std::uint64_t s) override { dev_->state.reseed(s); }

    bool last_switched() const { return last_switched_; }
    const std::shared_ptr<device::Device>& shared_device() const { return dev_; }

private:
    std::shared_ptr<device::Device> dev_;
    bool last_switched_ = false;
};

}  // namespace spinloop
