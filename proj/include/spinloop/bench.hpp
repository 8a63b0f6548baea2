#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinloop/backend.hpp"
#include "spinloop/device.hpp"
#include "spinloop/numfmt.hpp"

namespace spinloop::bench {

inline constexpr const char* kIdnResponse = "SPINBENCH,1";

/// Wire number rendering: 6-digit mantissa, plain integer exponent
/// ("2.000000e1", "5.000000e-5", "0.000000e0").
inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6e", v);
    std::string s(buf);
    const auto e = s.find('e');
    std::string mantissa = s.substr(0, e);
    std::string exponent = s.substr(e + 1);
    bool negative = false;
    std::size_t pos = 0;
    if (exponent[pos] == '+') {
        ++pos;
    } else if (exponent[pos] == '-') {
        negative = true;
        ++pos;
    }
    while (pos + 1 < exponent.size() && exponent[pos] == '0') ++pos;
    return mantissa + "e" + (negative ? "-" : "") + exponent.substr(pos);
}

/// Server-side device description, loadable from the JSON parameter file.
struct BenchDeviceConfig {
    device::DeviceParams params;
    std::uint64_t seed = 0;

    static BenchDeviceConfig from_json(const nlohmann::json& j) {
        BenchDeviceConfig cfg;
        cfg.params.i_bias_a = j.at("i_bias_A").get<double>();
        cfg.params.i_delta_a = j.at("i_delta_A").get<double>();
        cfg.params.r_set_ohm = j.value("r_set_ohm", cfg.params.r_set_ohm);
        cfg.params.r_reset_ohm = j.value("r_reset_ohm", cfg.params.r_reset_ohm);
        cfg.params.h_an_a_per_m = j.value("h_an_A_per_m", cfg.params.h_an_a_per_m);
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.params.validate();
        return cfg;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"i_bias_A", params.i_bias_a}, {"i_delta_A", params.i_delta_a},
                              {"r_set_ohm", params.r_set_ohm}, {"r_reset_ohm", params.r_reset_ohm},
                              {"h_an_A_per_m", params.h_an_a_per_m}, {"seed", seed}};
    }
};

namespace detail {

inline void send_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n <= 0) throw std::runtime_error("bench: socket send failed");
        off += static_cast<std::size_t>(n);
    }
}

/// Buffered line reader; returns false on orderly remote close.
class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}

    bool next(std::string& line) {
        line.clear();
        while (true) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return true;
            }
            char chunk[4096];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n == 0) return false;
            if (n < 0) throw std::runtime_error("bench: socket recv failed");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
    std::string buffer_;
};

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    return toks;
}

}  // namespace detail

/// Line-oriented instrument emulator wrapping one simulated device: the
/// pulse-source/multimeter pair behind a SCPI-flavored grammar.
///
///   *IDN?          -> SPINBENCH,1
///   RST            -> OK                 (reset pulse)
///   PULSE <amps>   -> OK <0|1>           (write pulse; flag = switched)
///   READ?          -> <resistance>       (Hall readout at 50 uA)
///   SEED <u64>     -> OK                 (reseed the device stream)
///   PARAM?         -> <i_bias_A> <i_delta_A>
///   QUIT           -> OK, then the session closes
///
/// Exactly one response line per request; malformed input answers
/// "ERR <code> <message>" and never mutates device state. A second
/// concurrent session is refused with ERR BUSY.
class BenchServer {
public:
    BenchServer(BenchDeviceConfig config, std::uint16_t port = 0, bool realtime = false)
        : config_(config), realtime_(realtime) {
        dev_ = std::make_shared<device::Device>(
            device::Device{config.params, device::DeviceState{config.seed}});

        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw std::runtime_error("bench: cannot create socket");
        int yes = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));

        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(listen_fd_);
            throw std::runtime_error("bench: cannot bind port " + std::to_string(port));
        }
        if (::listen(listen_fd_, 4) != 0) {
            ::close(listen_fd_);
            throw std::runtime_error("bench: listen failed");
        }
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    ~BenchServer() { stop(); }

    BenchServer(const BenchServer&) = delete;
    BenchServer& operator=(const BenchServer&) = delete;

    std::uint16_t port() const { return port_; }

    void start() {
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) {
            if (listen_fd_ >= 0) {
                ::close(listen_fd_);
                listen_fd_ = -1;
            }
            return;
        }
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
        {
            // unblock a session still waiting on a connected client
            std::lock_guard<std::mutex> lock(session_mu_);
            for (int fd : session_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        if (session_thread_.joinable()) session_thread_.join();
    }

    /// Blocking convenience for the CLI: start and wait for the accept loop.
    void run() {
        running_ = true;
        accept_loop();
    }

    /// Applies one command line to the wrapped device; exposed so protocol
    /// behavior is testable without sockets. Returns (response, keep_session).
    std::pair<std::string, bool> handle_line(const std::string& line) {
        const auto toks = detail::split_ws(line);
        if (toks.empty()) return {"ERR SYNTAX empty command", true};
        const std::string& verb = toks[0];
        try {
            if (verb == "*IDN?") {
                if (toks.size() != 1) return {"ERR SYNTAX *IDN? takes no arguments", true};
                return {kIdnResponse, true};
            }
            if (verb == "RST") {
                if (toks.size() != 1) return {"ERR SYNTAX RST takes no arguments", true};
                device::apply_reset_pulse(dev_->state);
                sleep_for_pulse(device::kResetPulseSeconds);
                return {"OK", true};
            }
            if (verb == "PULSE") {
                if (toks.size() != 2) return {"ERR SYNTAX PULSE takes one amplitude", true};
                double amps;
                try {
                    amps = parse_double(toks[1]);
                } catch (const std::exception&) {
                    return {"ERR ARG malformed amplitude", true};
                }
                if (!std::isfinite(amps)) return {"ERR ARG amplitude must be finite", true};
                const bool switched = device::apply_write_pulse(dev_->state, dev_->params, amps);
                sleep_for_pulse(device::kWritePulseSeconds);
                return {switched ? "OK 1" : "OK 0", true};
            }
            if (verb == "READ?") {
                if (toks.size() != 1) return {"ERR SYNTAX READ? takes no arguments", true};
                const auto reading = device::read_hall(dev_->state, dev_->params);
                sleep_for_pulse(device::kReadPulseSeconds);
                return {format_number(reading.r_ahe_ohm), true};
            }
            if (verb == "SEED") {
                if (toks.size() != 2) return {"ERR SYNTAX SEED takes one value", true};
                std::uint64_t s;
                try {
                    s = parse_u64(toks[1]);
                } catch (const std::exception&) {
                    return {"ERR ARG malformed seed", true};
                }
                dev_->state.reseed(s);
                return {"OK", true};
            }
            if (verb == "PARAM?") {
                if (toks.size() != 1) return {"ERR SYNTAX PARAM? takes no arguments", true};
                return {format_number(dev_->params.i_bias_a) + " " +
                            format_number(dev_->params.i_delta_a),
                        true};
            }
            if (verb == "QUIT") {
                return {"OK", false};
            }
        } catch (const std::exception& e) {
            return {std::string("ERR ARG ") + e.what(), true};
        }
        return {"ERR SYNTAX unknown command '" + verb + "'", true};
    }

private:
    void sleep_for_pulse(double pulse_seconds) {
        if (!realtime_) return;
        std::this_thread::sleep_for(std::chrono::duration<double>(
            pulse_seconds + device::kInterPulseSeconds));
    }

    void accept_loop() {
        while (running_) {
            sockaddr_in peer{};
            socklen_t len = sizeof(peer);
            const int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
            if (fd < 0) {
                if (!running_) break;
                continue;
            }
            int yes = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
            if (busy_.exchange(true)) {
                try {
                    detail::send_all(fd, "ERR BUSY device in use\n");
                } catch (...) {
                }
                ::close(fd);
                continue;
            }
            {
                std::lock_guard<std::mutex> lock(session_mu_);
                session_fds_.push_back(fd);
            }
            // one session at a time; the previous thread has finished
            if (session_thread_.joinable()) session_thread_.join();
            session_thread_ = std::thread([this, fd] { session_loop(fd); });
        }
    }

    void session_loop(int fd) {
        try {
            detail::LineReader reader(fd);
            std::string line;
            while (reader.next(line)) {
                auto [response, keep] = handle_line(line);
                detail::send_all(fd, response + "\n");
                if (!keep) break;
            }
        } catch (...) {
            // connection torn down mid-command; device state stays as-is
        }
        {
            std::lock_guard<std::mutex> lock(session_mu_);
            std::erase(session_fds_, fd);
        }
        ::close(fd);
        busy_ = false;
    }

    BenchDeviceConfig config_;
    bool realtime_ = false;
    std::shared_ptr<device::Device> dev_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<bool> busy_{false};
    std::thread accept_thread_;
    std::thread session_thread_;
    std::mutex session_mu_;
    std::vector<int> session_fds_;
};

/// Connection error or mid-protocol loss; carries how many commands had fully
/// completed so a caller can abort the active work item cleanly.
class BackendFault : public std::runtime_error {
public:
    BackendFault(const std::string& what, std::uint64_t completed)
        : std::runtime_error(what), completed_commands(completed) {}

    std::uint64_t completed_commands;
};

/// DeviceBackendContract over the wire: reset/write/read map 1:1 onto
/// RST/PULSE/READ?, blocking request-response, one line each way.
class RemoteBackend final : public DeviceBackend {
public:
    explicit RemoteBackend(const std::string& host, std::uint16_t port,
                           double timeout_seconds = 10.0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw BackendFault("remote backend: cannot create socket", 0);

        timeval tv{};
        tv.tv_sec = static_cast<long>(timeout_seconds);
        tv.tv_usec = static_cast<long>((timeout_seconds - double(tv.tv_sec)) * 1e6);
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
        int yes = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));

        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            hostent* he = ::gethostbyname(host.c_str());
            if (!he || he->h_addrtype != AF_INET) {
                ::close(fd_);
                throw BackendFault("remote backend: cannot resolve host " + host, 0);
            }
            std::memcpy(&addr.sin_addr, he->h_addr_list[0], sizeof(addr.sin_addr));
        }
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd_);
            throw BackendFault("remote backend: cannot connect to " + host + ":" +
                                   std::to_string(port),
                               0);
        }
        reader_ = std::make_unique<detail::LineReader>(fd_);
    }

    ~RemoteBackend() override {
        if (fd_ >= 0) ::close(fd_);
    }

    RemoteBackend(const RemoteBackend&) = delete;
    RemoteBackend& operator=(const RemoteBackend&) = delete;

    void reset() override { expect_ok(request("RST")); }

    void write(double i_write_a) override {
        const std::string resp = request("PULSE " + dtos(i_write_a));
        if (resp == "OK 1") {
            last_switched_ = true;
        } else if (resp == "OK 0") {
            last_switched_ = false;
        } else {
            throw BackendFault("remote backend: unexpected PULSE response '" + resp + "'",
                               completed_);
        }
    }

    double read() override { return parse_double(request("READ?")); }

    void seed(std::uint64_t s) override { expect_ok(request("SEED " + std::to_string(s))); }

    std::pair<double, double> query_params() {
        const std::string resp = request("PARAM?");
        const auto toks = detail::split_ws(resp);
        if (toks.size() != 2)
            throw BackendFault("remote backend: unexpected PARAM? response '" + resp + "'",
                               completed_);
        return {parse_double(toks[0]), parse_double(toks[1])};
    }

    std::string identify() { return request("*IDN?"); }

    bool last_switched() const { return last_switched_; }
    std::uint64_t commands_sent() const { return commands_sent_; }

    /// Optional transcript capture of (command, response) pairs.
    void record_transcript(std::vector<std::pair<std::string, std::string>>* sink) {
        transcript_ = sink;
    }

private:
    std::string request(const std::string& command) {
        ++commands_sent_;
        try {
            detail::send_all(fd_, command + "\n");
            std::string response;
            if (!reader_->next(response))
                throw std::runtime_error("connection closed by server");
            if (response.rfind("ERR", 0) == 0)
                throw std::runtime_error("server error: " + response);
            ++completed_;
            if (transcript_) transcript_->emplace_back(command, response);
            return response;
        } catch (const BackendFault&) {
            throw;
        } catch (const std::exception& e) {
            throw BackendFault(std::string("remote backend: ") + e.what() + " after " +
                                   std::to_string(completed_) + " completed commands",
                               completed_);
        }
    }

    void expect_ok(const std::string& resp) {
        if (resp != "OK")
            throw BackendFault("remote backend: expected OK, got '" + resp + "'", completed_);
    }

    int fd_ = -1;
    std::unique_ptr<detail::LineReader> reader_;
    bool last_switched_ = false;
    std::uint64_t commands_sent_ = 0;
    std::uint64_t completed_ = 0;
    std::vector<std::pair<std::string, std::string>>* transcript_ = nullptr;
};

}  // namespace spinloop::bench
