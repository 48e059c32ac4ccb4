/// @file simulator.hpp
/// @brief Time integration of the motor model and sampled trajectories.
///
/// The electrical transient lives on a millisecond scale while the armature heats over
/// hours. A single explicit Dormand-Prince 5(4) integrator handles both: after the
/// transient the step size settles at the stability limit of the electrical pole.
/// Sampling is dual-rate (dense during `fast_window`, sparse afterwards).

#pragma once

#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"
#include "motorsense/motor_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace motorsense
{

struct SimConfig {
    double t_end                = 160.0 * 60.0; ///< [s]
    double rel_tol              = 1e-7;
    MotorState abs_tol          = {1e-6, 1e-6, 1e-6}; ///< per component (A, rad/s, K)
    double max_step             = 1.0;   ///< [s]
    double sample_interval_fast = 1e-3;  ///< [s]
    double sample_interval_slow = 1.0;   ///< [s]
    double fast_window          = 5.0;   ///< [s] sampled at the fast rate from t = 0
    /// Classic fixed-step RK4 with step `max_step`; tolerances are ignored.
    bool fixed_step = false;
};

inline void validate(const SimConfig &c)
{
    if (!(c.t_end > 0.0) || !std::isfinite(c.t_end)) {
        throw ArgumentError("SimConfig: t_end must be > 0");
    }
    if (!(c.rel_tol > 0.0) || !(c.abs_tol.i_a > 0.0) || !(c.abs_tol.omega > 0.0) ||
        !(c.abs_tol.theta > 0.0)) {
        throw ArgumentError("SimConfig: tolerances must be > 0");
    }
    if (!(c.max_step > 0.0)) {
        throw ArgumentError("SimConfig: max_step must be > 0");
    }
    if (!(c.sample_interval_fast > 0.0) || !(c.sample_interval_slow > 0.0)) {
        throw ArgumentError("SimConfig: sample intervals must be > 0");
    }
    if (c.sample_interval_fast > c.sample_interval_slow) {
        throw ArgumentError("SimConfig: sample_interval_fast must not exceed sample_interval_slow");
    }
    if (c.fast_window < 0.0) {
        throw ArgumentError("SimConfig: fast_window must be >= 0");
    }
}

struct TrajectorySample {
    double t = 0.0;
    MotorState state;
    double resistance = 0.0;
    LossBreakdown losses;
    double v_a = 0.0;
};

/// Sampled solution together with the parameters that produced it.
struct Trajectory {
    MotorParams params;
    std::vector<TrajectorySample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

inline TrajectorySample make_sample(const MotorParams &p, double t, const MotorState &s)
{
    return TrajectorySample{t, s, armature_resistance(p, s.theta), losses(p, s), p.v_a};
}

/// Dual-rate sampling grid: k * fast up to fast_window, then fast_window + m * slow, with t_end
/// always the final entry.
inline std::vector<double> sample_times(const SimConfig &c)
{
    std::vector<double> times;
    const double window = std::min(c.fast_window, c.t_end);
    const auto n_fast   = static_cast<long long>(std::floor(window / c.sample_interval_fast + 1e-9));
    for (long long k = 0; k <= n_fast; ++k) {
        times.push_back(static_cast<double>(k) * c.sample_interval_fast);
    }
    const double slow_origin = times.back();
    for (long long m = 1;; ++m) {
        const double t = slow_origin + static_cast<double>(m) * c.sample_interval_slow;
        if (t >= c.t_end * (1.0 - 1e-12)) {
            break;
        }
        times.push_back(t);
    }
    if (times.back() < c.t_end) {
        times.push_back(c.t_end);
    }
    return times;
}

namespace detail
{

using Vec3 = std::array<double, 3>;

inline Vec3 rhs(const MotorParams &p, const Vec3 &y)
{
    const StateDerivative d = state_derivative(p, MotorState{y[0], y[1], y[2]});
    return {d.di_a_dt, d.domega_dt, d.dtheta_dt};
}

inline Vec3 axpy(const Vec3 &y, double h, std::initializer_list<std::pair<double, const Vec3 *>> terms)
{
    Vec3 out = y;
    for (const auto &[coef, k] : terms) {
        for (int c = 0; c < 3; ++c) {
            out[c] += h * coef * (*k)[c];
        }
    }
    return out;
}

inline void check_finite(const Vec3 &y, double t)
{
    static constexpr std::array<const char *, 3> names{"i_a", "omega", "theta"};
    for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(y[c])) {
            throw NumericalError(std::string("integrate: state component ") + names[c] +
                                 " became non-finite at t = " + format_double(t));
        }
    }
}

/// Dormand-Prince 5(4), FSAL.
class DormandPrince
{
public:
    DormandPrince(const MotorParams &p, const SimConfig &c)
        : p_(p)
        , c_(c)
    {
    }

    /// Advances y from t to t_target exactly.
    void advance(Vec3 &y, double &t, double t_target)
    {
        if (!have_k1_) {
            k1_      = rhs(p_, y);
            have_k1_ = true;
            if (h_ <= 0.0) {
                h_ = initial_step(y);
            }
        }
        while (t < t_target) {
            double h        = std::min({h_, c_.max_step, t_target - t});
            const bool last = (h == t_target - t);
            const double h_min = 1e-14 * std::max(1.0, std::abs(t));
            if (h < h_min && !last) {
                throw IntegrationError("integrate: step size underflow at t = " + format_double(t), t);
            }

            const Vec3 k2 = rhs(p_, axpy(y, h, {{1.0 / 5, &k1_}}));
            const Vec3 k3 = rhs(p_, axpy(y, h, {{3.0 / 40, &k1_}, {9.0 / 40, &k2}}));
            const Vec3 k4 = rhs(p_, axpy(y, h, {{44.0 / 45, &k1_}, {-56.0 / 15, &k2}, {32.0 / 9, &k3}}));
            const Vec3 k5 = rhs(p_, axpy(y, h,
                                         {{19372.0 / 6561, &k1_},
                                          {-25360.0 / 2187, &k2},
                                          {64448.0 / 6561, &k3},
                                          {-212.0 / 729, &k4}}));
            const Vec3 k6 = rhs(p_, axpy(y, h,
                                         {{9017.0 / 3168, &k1_},
                                          {-355.0 / 33, &k2},
                                          {46732.0 / 5247, &k3},
                                          {49.0 / 176, &k4},
                                          {-5103.0 / 18656, &k5}}));
            const Vec3 y5 = axpy(y, h,
                                 {{35.0 / 384, &k1_},
                                  {500.0 / 1113, &k3},
                                  {125.0 / 192, &k4},
                                  {-2187.0 / 6784, &k5},
                                  {11.0 / 84, &k6}});
            check_finite(y5, t + h);
            const Vec3 k7 = rhs(p_, y5);

            // Difference between the 5th and embedded 4th order solutions.
            static constexpr std::array<double, 7> e{71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                                                     -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
            const std::array<double, 3> atol{c_.abs_tol.i_a, c_.abs_tol.omega, c_.abs_tol.theta};
            double err = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double delta = h * (e[0] * k1_[c] + e[2] * k3[c] + e[3] * k4[c] +
                                          e[4] * k5[c] + e[5] * k6[c] + e[6] * k7[c]);
                const double scale = atol[c] + c_.rel_tol * std::max(std::abs(y[c]), std::abs(y5[c]));
                err                = std::max(err, std::abs(delta) / scale);
            }

            if (err <= 1.0) {
                t   = last ? t_target : t + h;
                y   = y5;
                k1_ = k7;
                ++accepted_;
                const double factor   = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                const double proposed = h * factor;
                // A step shortened to land on a sample must not shrink the next one.
                h_ = (last && h < h_) ? std::max(h_, proposed) : proposed;
            } else {
                ++rejected_;
                h_ = h * std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
                if (h_ < h_min) {
                    throw IntegrationError("integrate: step size underflow at t = " + format_double(t), t);
                }
            }
        }
    }

    std::size_t accepted() const noexcept { return accepted_; }
    std::size_t rejected() const noexcept { return rejected_; }

private:
    double initial_step(const Vec3 &y) const
    {
        const std::array<double, 3> atol{c_.abs_tol.i_a, c_.abs_tol.omega, c_.abs_tol.theta};
        double d0 = 0.0, d1 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double sc = atol[c] + c_.rel_tol * std::abs(y[c]);
            d0              = std::max(d0, std::abs(y[c]) / sc);
            d1              = std::max(d1, std::abs(k1_[c]) / sc);
        }
        double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        return std::min(h, c_.max_step);
    }

    const MotorParams &p_;
    const SimConfig &c_;
    Vec3 k1_{};
    bool have_k1_ = false;
    double h_     = 0.0;
    std::size_t accepted_ = 0;
    std::size_t rejected_ = 0;
};

inline void rk4_advance(const MotorParams &p, double h_max, Vec3 &y, double &t, double t_target)
{
    // Equal sub-steps so that sample times are hit exactly.
    const double span = t_target - t;
    const auto n      = static_cast<long long>(std::ceil(span / h_max - 1e-9));
    const double h    = span / static_cast<double>(std::max<long long>(n, 1));
    for (long long s = 0; s < std::max<long long>(n, 1); ++s) {
        const Vec3 k1 = rhs(p, y);
        const Vec3 k2 = rhs(p, axpy(y, h, {{0.5, &k1}}));
        const Vec3 k3 = rhs(p, axpy(y, h, {{0.5, &k2}}));
        const Vec3 k4 = rhs(p, axpy(y, h, {{1.0, &k3}}));
        y             = axpy(y, h, {{1.0 / 6, &k1}, {1.0 / 3, &k2}, {1.0 / 3, &k3}, {1.0 / 6, &k4}});
        check_finite(y, t + (s + 1) * h);
    }
    t = t_target;
}

} // namespace detail

/// Integrates the motor model from `initial` and samples it on the dual-rate grid.
inline Trajectory integrate(const MotorParams &params, const MotorState &initial, const SimConfig &cfg)
{
    validate(params);
    validate(cfg);
    detail::Vec3 y{initial.i_a, initial.omega, initial.theta};
    detail::check_finite(y, 0.0);

    const std::vector<double> times = sample_times(cfg);
    Trajectory traj;
    traj.params = params;
    traj.samples.reserve(times.size());
    traj.samples.push_back(make_sample(params, times.front(), initial));

    double t = times.front();
    detail::DormandPrince stepper(params, cfg);
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (cfg.fixed_step) {
            detail::rk4_advance(params, cfg.max_step, y, t, times[k]);
        } else {
            stepper.advance(y, t, times[k]);
        }
        traj.samples.push_back(make_sample(params, times[k], MotorState{y[0], y[1], y[2]}));
    }
    return traj;
}

inline Trajectory integrate(const MotorParams &params, const SimConfig &cfg = {})
{
    return integrate(params, MotorState{}, cfg);
}

/// Earliest sample time from which every state component stays within `tol` of its final
/// value through the end of the trajectory, provided that settled span lasts at least
/// `window` seconds.
inline std::optional<double> detect_steady_state(const Trajectory &traj, double window, const MotorState &tol)
{
    if (traj.empty()) {
        throw ArgumentError("detect_steady_state: empty trajectory");
    }
    const double duration = traj.samples.back().t - traj.samples.front().t;
    if (window > duration) {
        throw ArgumentError("detect_steady_state: window longer than trajectory");
    }
    const MotorState &final = traj.samples.back().state;
    std::size_t first       = traj.size();
    for (std::size_t k = traj.size(); k-- > 0;) {
        const MotorState &s = traj.samples[k].state;
        if (std::abs(s.i_a - final.i_a) > tol.i_a || std::abs(s.omega - final.omega) > tol.omega ||
            std::abs(s.theta - final.theta) > tol.theta) {
            break;
        }
        first = k;
    }
    if (first == traj.size()) {
        return std::nullopt;
    }
    if (traj.samples.back().t - traj.samples[first].t < window) {
        return std::nullopt;
    }
    return traj.samples[first].t;
}

/// Linear interpolation of the state on a uniform grid; derived columns are recomputed from
/// the interpolated state. Both endpoints are kept.
inline Trajectory resample(const Trajectory &traj, double interval)
{
    if (traj.empty()) {
        throw ArgumentError("resample: empty trajectory");
    }
    if (!(interval > 0.0)) {
        throw ArgumentError("resample: interval must be > 0");
    }
    Trajectory out;
    out.params = traj.params;
    const double t0 = traj.samples.front().t;
    const double t1 = traj.samples.back().t;

    std::size_t seg = 0;
    auto at         = [&](double t) {
        while (seg + 1 < traj.size() && traj.samples[seg + 1].t <= t) {
            ++seg;
        }
        const TrajectorySample &a = traj.samples[seg];
        if (a.t == t || seg + 1 == traj.size()) {
            return a;
        }
        const TrajectorySample &b = traj.samples[seg + 1];
        const double w            = (t - a.t) / (b.t - a.t);
        MotorState s{a.state.i_a + w * (b.state.i_a - a.state.i_a),
                     a.state.omega + w * (b.state.omega - a.state.omega),
                     a.state.theta + w * (b.state.theta - a.state.theta)};
        return make_sample(traj.params, t, s);
    };

    for (long long k = 0;; ++k) {
        const double t = t0 + static_cast<double>(k) * interval;
        if (t > t1 * (1.0 + 1e-15) || (t > t1 - 1e-12 * std::max(1.0, std::abs(t1)) && k > 0)) {
            break;
        }
        out.samples.push_back(at(t));
    }
    if (out.samples.back().t != t1) {
        out.samples.push_back(traj.samples.back());
    }
    return out;
}

inline constexpr const char *trajectory_csv_header = "t,i_a,omega,theta,resistance,p_copper,p_iron,p_total,v_a";

inline std::string to_csv(const Trajectory &traj)
{
    std::string out = trajectory_csv_header;
    out += '\n';
    for (const auto &s : traj.samples) {
        for (double v : {s.t, s.state.i_a, s.state.omega, s.state.theta, s.resistance, s.losses.copper,
                         s.losses.iron, s.losses.total}) {
            out += format_double(v);
            out += ',';
        }
        out += format_double(s.v_a);
        out += '\n';
    }
    return out;
}

/// Reads a trajectory CSV; the file's derived columns are taken verbatim.
inline Trajectory trajectory_from_csv(const std::string &text, const MotorParams &params)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != trajectory_csv_header) {
        throw IoError("trajectory CSV: unexpected header");
    }
    Trajectory traj;
    traj.params = params;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 9) {
            throw IoError("trajectory CSV line " + std::to_string(line_no) + ": expected 9 fields");
        }
        TrajectorySample s;
        s.t             = parse_double(f[0], "t");
        s.state.i_a     = parse_double(f[1], "i_a");
        s.state.omega   = parse_double(f[2], "omega");
        s.state.theta   = parse_double(f[3], "theta");
        s.resistance    = parse_double(f[4], "resistance");
        s.losses.copper = parse_double(f[5], "p_copper");
        s.losses.iron   = parse_double(f[6], "p_iron");
        s.losses.total  = parse_double(f[7], "p_total");
        s.v_a           = parse_double(f[8], "v_a");
        if (!traj.samples.empty() && !(s.t > traj.samples.back().t)) {
            throw IoError("trajectory CSV line " + std::to_string(line_no) + ": timestamps must increase");
        }
        traj.samples.push_back(s);
    }
    return traj;
}

} // namespace motorsense
