#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinloop/backend.hpp"
#include "spinloop/numfmt.hpp"

namespace spinloop::charlab {

using spinloop::ProtocolFault;

struct CurvePoint {
    double i_write_a;
    std::uint64_t switches;
    std::uint64_t trials;

    double p_hat() const { return static_cast<double>(switches) / static_cast<double>(trials); }
};

/// Empirical switching curve from the reset-set protocol.
struct SwitchCurve {
    std::vector<CurvePoint> points;

    void validate() const {
        for (std::size_t k = 0; k < points.size(); ++k) {
            const auto& pt = points[k];
            if (pt.trials == 0) throw std::invalid_argument("SwitchCurve: zero-trial point");
            if (pt.switches > pt.trials)
                throw std::invalid_argument("SwitchCurve: switches exceed trials");
            if (k > 0 && !(points[k - 1].i_write_a < pt.i_write_a))
                throw std::invalid_argument("SwitchCurve: currents must be strictly increasing");
        }
    }
};

struct SigmoidFit {
    double i_bias_a = 0.0;
    double i_delta_a = 0.0;
    double neg_log_likelihood = 0.0;
    bool converged = false;
};

struct FieldPoint {
    double h_x_a_per_m;
    double r_ahe_ohm;
};

struct FieldSweep {
    std::vector<FieldPoint> points;
};

struct AnisotropyFit {
    double h_an_a_per_m = 0.0;
    double r0_ohm = 0.0;
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

namespace detail {

inline double log_sigmoid(double z) {
    // log(1/(1+e^-z)) without overflow on either tail.
    if (z >= 0.0) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double binomial_nll(const SwitchCurve& curve, double i_bias, double i_delta) {
    double nll = 0.0;
    for (const auto& pt : curve.points) {
        const double z = (pt.i_write_a - i_bias) / i_delta;
        const double k = static_cast<double>(pt.switches);
        const double n = static_cast<double>(pt.trials);
        nll -= k * log_sigmoid(z) + (n - k) * log_sigmoid(-z);
    }
    return nll;
}

/// Initial i_bias: measured current whose empirical probability is closest to
/// 0.5. Initial i_delta from the empirical quartile-crossing currents:
/// sigma(z) = 0.75 at z = ln 3, so i75 - i25 = 2 ln3 * i_delta.
inline std::pair<double, double> initial_guess(const SwitchCurve& curve) {
    double best_dist = std::numeric_limits<double>::infinity();
    double i_bias0 = curve.points.front().i_write_a;
    for (const auto& pt : curve.points) {
        const double d = std::fabs(pt.p_hat() - 0.5);
        if (d < best_dist) {
            best_dist = d;
            i_bias0 = pt.i_write_a;
        }
    }

    auto crossing = [&](double level) -> double {
        for (std::size_t k = 1; k < curve.points.size(); ++k) {
            const double p0 = curve.points[k - 1].p_hat();
            const double p1 = curve.points[k].p_hat();
            if ((p0 - level) * (p1 - level) <= 0.0 && p0 != p1) {
                const double t = (level - p0) / (p1 - p0);
                return curve.points[k - 1].i_write_a +
                       t * (curve.points[k].i_write_a - curve.points[k - 1].i_write_a);
            }
        }
        return std::numeric_limits<double>::quiet_NaN();
    };

    const double i25 = crossing(0.25);
    const double i75 = crossing(0.75);
    double i_delta0 = (i75 - i25) / (2.0 * std::log(3.0));
    if (!std::isfinite(i_delta0) || !(i_delta0 > 0.0)) {
        const double span = curve.points.back().i_write_a - curve.points.front().i_write_a;
        i_delta0 = span > 0.0 ? span / 16.0 : 1.0;
    }
    return {i_bias0, i_delta0};
}

}  // namespace detail

/// One characterization point: n_iter cycles of {reset; read (confirm RESET);
/// write(i); read}, counting cycles whose post-write read differs from the
/// post-reset read. The first post-reset read of the run establishes the
/// RESET-state resistance; any later mismatch is a protocol fault.
inline SwitchCurve run_reset_set_protocol(DeviceBackend& backend,
                                          const std::vector<double>& currents,
                                          std::uint64_t n_iter = 100) {
    if (n_iter < 1) throw std::invalid_argument("run_reset_set_protocol: n_iter must be >= 1");
    SwitchCurve curve;
    curve.points.reserve(currents.size());
    bool have_ref = false;
    double reset_ref = 0.0;
    for (double i : currents) {
        std::uint64_t switches = 0;
        for (std::uint64_t it = 0; it < n_iter; ++it) {
            backend.reset();
            const double r0 = backend.read();
            if (!have_ref) {
                reset_ref = r0;
                have_ref = true;
            } else if (r0 != reset_ref) {
                std::ostringstream msg;
                msg << "reset not confirmed: expected r=" << reset_ref << " ohm, read " << r0;
                throw ProtocolFault(msg.str());
            }
            backend.write(i);
            const double r1 = backend.read();
            if (r1 != r0) ++switches;
        }
        curve.points.push_back(CurvePoint{i, switches, n_iter});
    }
    curve.validate();
    return curve;
}

/// Estimated bench wall-clock for run_reset_set_protocol with real pulse
/// spacing (2 s intervals, 500 ms reads); the simulation itself never sleeps.
inline double protocol_wall_clock_seconds(std::size_t n_currents, std::uint64_t n_iter) {
    const double per_cycle = device::kResetPulseSeconds + device::kWritePulseSeconds +
                             2.0 * device::kReadPulseSeconds + 4.0 * device::kInterPulseSeconds;
    return static_cast<double>(n_currents) * static_cast<double>(n_iter) * per_cycle;
}

/// Binomial maximum-likelihood fit of p(i) = sigma((i - i_bias)/i_delta).
/// Fisher scoring with step halving; terminates at relative parameter change
/// <= 1e-8 or 500 iterations (converged flag reports which).
inline SigmoidFit fit_sigmoid(const SwitchCurve& curve) {
    curve.validate();
    if (curve.points.size() < 3)
        throw std::invalid_argument("fit_sigmoid: need at least 3 points");
    bool below = false, above = false;
    for (const auto& pt : curve.points) {
        if (pt.p_hat() < 0.5) below = true;
        if (pt.p_hat() > 0.5) above = true;
    }
    if (!below || !above)
        throw std::invalid_argument(
            "fit_sigmoid: curve not identifiable (need empirical points on both sides of 0.5)");

    auto [a, d] = detail::initial_guess(curve);
    double nll = detail::binomial_nll(curve, a, d);
    bool converged = false;

    for (int iter = 0; iter < 500; ++iter) {
        // Gradient and Fisher information in (i_bias, i_delta).
        double ga = 0.0, gd = 0.0;
        double faa = 0.0, fad = 0.0, fdd = 0.0;
        for (const auto& pt : curve.points) {
            const double z = (pt.i_write_a - a) / d;
            const double p = detail::sigmoid(z);
            const double k = static_cast<double>(pt.switches);
            const double n = static_cast<double>(pt.trials);
            const double resid = k - n * p;  // dNLL/dz = -(k - n p)
            ga += resid / d;
            gd += resid * z / d;
            const double w = n * p * (1.0 - p);
            faa += w / (d * d);
            fad += w * z / (d * d);
            fdd += w * z * z / (d * d);
        }

        double step_a, step_d;
        const double det = faa * fdd - fad * fad;
        if (det > 1e-300 && faa > 0.0) {
            step_a = -(fdd * ga - fad * gd) / det;
            step_d = -(faa * gd - fad * ga) / det;
        } else {
            // Saturated curve corner: fall back to a scaled gradient step.
            const double gnorm = std::hypot(ga, gd);
            if (gnorm == 0.0) break;
            step_a = -ga / gnorm * d;
            step_d = -gd / gnorm * d;
        }

        double scale = 1.0;
        double a_next = a, d_next = d, nll_next = nll;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            const double a_try = a + scale * step_a;
            const double d_try = d + scale * step_d;
            if (d_try > 0.0) {
                const double nll_try = detail::binomial_nll(curve, a_try, d_try);
                if (nll_try <= nll) {
                    a_next = a_try;
                    d_next = d_try;
                    nll_next = nll_try;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!accepted) {
            converged = true;  // no descent direction left at working precision
            break;
        }

        const double param_scale = std::max(std::fabs(a_next), d_next);
        const double change =
            std::max(std::fabs(a_next - a) / param_scale, std::fabs(d_next - d) / d_next);
        a = a_next;
        d = d_next;
        nll = nll_next;
        if (change <= 1e-8) {
            converged = true;
            break;
        }
    }

    return SigmoidFit{a, d, nll, converged};
}

/// Programming window: write-current range between 0.01% and 99.9% switching
/// probability, i_delta * (ln 999 + ln 9999) ~= 16.1170 * i_delta.
inline double programming_window(const SigmoidFit& fit) {
    constexpr double kLogitSpan = 6.906754778648554 + 9.210240366975849;  // ln999 + ln9999
    return fit.i_delta_a * kLogitSpan;
}

/// Ordinary least squares of value on width.
inline LinearFit scaling_regression(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("scaling_regression: need at least 2 samples");
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : samples) {
        sx += x;
        sy += y;
    }
    const double n = static_cast<double>(samples.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : samples) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0)
        throw std::invalid_argument("scaling_regression: all widths identical");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double ss_res = syy - fit.slope * sxy;
    fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
    return fit;
}

/// Least-squares fit of r(h) = r0 * (1 - (h/h_an)^2 / 2) over the low-tilt
/// region (points with r >= r_floor_fraction * r(h~0)). Linear in (r0, b)
/// after substituting u = h^2.
inline AnisotropyFit fit_anisotropy(const FieldSweep& sweep, double r_floor_fraction = 0.8) {
    if (sweep.points.size() < 3)
        throw std::invalid_argument("fit_anisotropy: need at least 3 points");
    for (const auto& pt : sweep.points)
        if (!std::isfinite(pt.h_x_a_per_m) || !std::isfinite(pt.r_ahe_ohm))
            throw std::invalid_argument("fit_anisotropy: non-finite sweep point");

    const FieldPoint* center = &sweep.points.front();
    for (const auto& pt : sweep.points)
        if (std::fabs(pt.h_x_a_per_m) < std::fabs(center->h_x_a_per_m)) center = &pt;
    const double r0_est = center->r_ahe_ohm;
    if (!(r0_est > 0.0))
        throw std::invalid_argument("fit_anisotropy: non-positive resistance near zero field");

    std::vector<FieldPoint> usable;
    for (const auto& pt : sweep.points)
        if (pt.r_ahe_ohm >= r_floor_fraction * r0_est) usable.push_back(pt);
    if (usable.size() < 3)
        throw std::invalid_argument("fit_anisotropy: fewer than 3 usable low-tilt points");

    // OLS of r on u = h^2.
    double su = 0.0, sr = 0.0;
    for (const auto& pt : usable) {
        su += pt.h_x_a_per_m * pt.h_x_a_per_m;
        sr += pt.r_ahe_ohm;
    }
    const double n = static_cast<double>(usable.size());
    const double mu = su / n, mr = sr / n;
    double suu = 0.0, sur = 0.0;
    for (const auto& pt : usable) {
        const double u = pt.h_x_a_per_m * pt.h_x_a_per_m;
        suu += (u - mu) * (u - mu);
        sur += (u - mu) * (pt.r_ahe_ohm - mr);
    }
    if (suu == 0.0)
        throw std::invalid_argument("fit_anisotropy: no field variation (degenerate fit)");
    const double b = sur / suu;
    const double r0 = mr - b * mu;
    if (!(r0 > 0.0) || !(b < 0.0))
        throw std::invalid_argument("fit_anisotropy: data lacks the downward curvature of a tilt sweep");
    return AnisotropyFit{std::sqrt(r0 / (-2.0 * b)), r0};
}

// ---------------------------------------------------------------------------
// CSV import/export. Lines starting with '#' carry provenance and are skipped
// on read; the header line is matched exactly.

inline constexpr const char* kSwitchCurveHeader = "i_write_A,switches,trials";
inline constexpr const char* kFieldSweepHeader = "h_x_A_per_m,r_ahe_ohm";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

inline std::string next_content_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        return line;
    }
    return {};
}

}  // namespace detail

inline void write_csv(const SwitchCurve& curve, std::ostream& out,
                      const std::string& config_comment = "") {
    if (!config_comment.empty()) out << "# config " << config_comment << "\n";
    out << kSwitchCurveHeader << "\n";
    for (const auto& pt : curve.points)
        out << dtos(pt.i_write_a) << ',' << pt.switches << ',' << pt.trials << "\n";
}

inline SwitchCurve read_switch_curve_csv(std::istream& in) {
    const std::string header = detail::next_content_line(in);
    if (header != kSwitchCurveHeader)
        throw std::invalid_argument("switch-curve CSV: expected header '" +
                                    std::string(kSwitchCurveHeader) + "', got '" + header + "'");
    SwitchCurve curve;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw std::invalid_argument("switch-curve CSV: expected 3 fields, got line '" + line + "'");
        curve.points.push_back(
            CurvePoint{parse_double(fields[0]), parse_u64(fields[1]), parse_u64(fields[2])});
    }
    curve.validate();
    return curve;
}

inline void write_csv(const FieldSweep& sweep, std::ostream& out,
                      const std::string& config_comment = "") {
    if (!config_comment.empty()) out << "# config " << config_comment << "\n";
    out << kFieldSweepHeader << "\n";
    for (const auto& pt : sweep.points)
        out << dtos(pt.h_x_a_per_m) << ',' << dtos(pt.r_ahe_ohm) << "\n";
}

inline FieldSweep read_field_sweep_csv(std::istream& in) {
    const std::string header = detail::next_content_line(in);
    if (header != kFieldSweepHeader)
        throw std::invalid_argument("field-sweep CSV: expected header '" +
                                    std::string(kFieldSweepHeader) + "', got '" + header + "'");
    FieldSweep sweep;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 2)
            throw std::invalid_argument("field-sweep CSV: expected 2 fields, got line '" + line + "'");
        sweep.points.push_back(FieldPoint{parse_double(fields[0]), parse_double(fields[1])});
    }
    return sweep;
}

}  // namespace spinloop::charlab
