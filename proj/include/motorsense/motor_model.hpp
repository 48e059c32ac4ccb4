/// @file motor_model.hpp
/// @brief Lumped electro-mechanical-thermal model of a brushed DC motor.
///
/// The state is (armature current, speed, armature temperature above ambient).
/// Resistance follows the linear law R = R_a0 (1 + alpha theta), iron loss grows
/// with speed squared and the fan makes the cooling coefficient affine in speed.

#pragma once

#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

namespace motorsense
{

/// Physical constants of the motor, SI units throughout.
struct MotorParams {
    double v_a   = 0.0; ///< Armature supply voltage [V].
    double r_a0  = 0.0; ///< Armature resistance at ambient temperature [Ohm].
    double alpha = 0.0; ///< Temperature coefficient of resistance [1/K].
    double l_a   = 0.0; ///< Armature inductance [H].
    double k_e   = 0.0; ///< Back-EMF / torque constant [V s/rad] == [N m/A].
    double b     = 0.0; ///< Viscous friction [N m s/rad].
    double j     = 0.0; ///< Total inertia [kg m^2].
    double t_l   = 0.0; ///< Load torque [N m].
    double k_ir  = 0.0; ///< Iron loss constant [W s^2/rad^2].
    double k_0   = 0.0; ///< Heat transfer coefficient at standstill [W/K].
    double k_t   = 0.0; ///< Speed dependence of heat transfer [s/rad].
    double h     = 0.0; ///< Thermal capacity of the armature [J/K].

    bool operator==(const MotorParams &) const = default;
};

/// Throws ArgumentError naming the first violated constraint.
inline void validate(const MotorParams &p)
{
    const std::array<std::pair<const char *, double>, 12> all{{{"v_a", p.v_a},
                                                               {"r_a0", p.r_a0},
                                                               {"alpha", p.alpha},
                                                               {"l_a", p.l_a},
                                                               {"k_e", p.k_e},
                                                               {"b", p.b},
                                                               {"j", p.j},
                                                               {"t_l", p.t_l},
                                                               {"k_ir", p.k_ir},
                                                               {"k_0", p.k_0},
                                                               {"k_t", p.k_t},
                                                               {"h", p.h}}};
    for (const auto &[name, value] : all) {
        if (!std::isfinite(value)) {
            throw ArgumentError(std::string("motor parameter ") + name + " is not finite");
        }
    }
    const std::array<std::pair<const char *, double>, 5> positive{
        {{"r_a0", p.r_a0}, {"l_a", p.l_a}, {"j", p.j}, {"h", p.h}, {"k_0", p.k_0}}};
    for (const auto &[name, value] : positive) {
        if (!(value > 0.0)) {
            throw ArgumentError(std::string("motor parameter ") + name + " must be > 0");
        }
    }
    const std::array<std::pair<const char *, double>, 5> non_negative{
        {{"alpha", p.alpha}, {"b", p.b}, {"k_ir", p.k_ir}, {"k_t", p.k_t}, {"t_l", p.t_l}}};
    for (const auto &[name, value] : non_negative) {
        if (value < 0.0) {
            throw ArgumentError(std::string("motor parameter ") + name + " must be >= 0");
        }
    }
}

/// State vector of the motor.
struct MotorState {
    double i_a   = 0.0; ///< Armature current [A].
    double omega = 0.0; ///< Speed [rad/s].
    double theta = 0.0; ///< Armature temperature above ambient [K].

    bool operator==(const MotorState &) const = default;
};

struct StateDerivative {
    double di_a_dt    = 0.0; ///< [A/s]
    double domega_dt  = 0.0; ///< [rad/s^2]
    double dtheta_dt  = 0.0; ///< [K/s]
};

/// Power dissipated in the armature [W].
struct LossBreakdown {
    double copper = 0.0;
    double iron   = 0.0;
    double total  = 0.0;

    bool operator==(const LossBreakdown &) const = default;
};

inline double armature_resistance(const MotorParams &p, double theta)
{
    if (!std::isfinite(theta)) {
        throw DomainError("armature_resistance: temperature is not finite");
    }
    return p.r_a0 * (1.0 + p.alpha * theta);
}

inline LossBreakdown losses(const MotorParams &p, const MotorState &s)
{
    LossBreakdown out;
    out.copper = armature_resistance(p, s.theta) * s.i_a * s.i_a;
    out.iron   = p.k_ir * s.omega * s.omega;
    out.total  = out.copper + out.iron;
    return out;
}

/// Speed-dependent heat transfer coefficient k_0 (1 + k_t omega) [W/K].
inline double cooling_coefficient(const MotorParams &p, double omega)
{
    return p.k_0 * (1.0 + p.k_t * omega);
}

inline StateDerivative state_derivative(const MotorParams &p, const MotorState &s)
{
    const double r = armature_resistance(p, s.theta);
    StateDerivative d;
    d.di_a_dt   = (-r * s.i_a - p.k_e * s.omega + p.v_a) / p.l_a;
    d.domega_dt = (p.k_e * s.i_a - p.b * s.omega - p.t_l) / p.j;
    d.dtheta_dt = (r * s.i_a * s.i_a + p.k_ir * s.omega * s.omega -
                   cooling_coefficient(p, s.omega) * s.theta) /
                  p.h;
    if (!std::isfinite(d.di_a_dt)) {
        throw NumericalError("state_derivative: di_a/dt is not finite");
    }
    if (!std::isfinite(d.domega_dt)) {
        throw NumericalError("state_derivative: domega/dt is not finite");
    }
    if (!std::isfinite(d.dtheta_dt)) {
        throw NumericalError("state_derivative: dtheta/dt is not finite");
    }
    return d;
}

/// Electro-mechanical equilibrium (di/dt = domega/dt = 0) at a frozen temperature.
inline MotorState quasi_static_point(const MotorParams &p, double theta)
{
    const double r   = armature_resistance(p, theta);
    const double det = r * p.b + p.k_e * p.k_e;
    if (!(det > 0.0)) {
        throw DomainError("quasi_static_point: R b + k_e^2 must be positive");
    }
    MotorState s;
    s.i_a   = (p.b * p.v_a + p.k_e * p.t_l) / det;
    s.omega = (p.k_e * p.v_a - r * p.t_l) / det;
    s.theta = theta;
    return s;
}

/// Thermal fixed point of the quasi-static motor: solves P(theta) = k(omega) theta with
/// electrical and mechanical equilibrium imposed.
inline MotorState steady_state(const MotorParams &p)
{
    validate(p);

    // alpha = 0 closed form as the seed.
    MotorParams linear = p;
    linear.alpha       = 0.0;
    MotorState x       = quasi_static_point(linear, 0.0);
    x.theta            = losses(linear, x).total / cooling_coefficient(p, x.omega);

    auto residual = [&p](const MotorState &s) {
        const double r = armature_resistance(p, s.theta);
        return Eigen::Vector3d(p.v_a - r * s.i_a - p.k_e * s.omega,
                               p.k_e * s.i_a - p.b * s.omega - p.t_l,
                               r * s.i_a * s.i_a + p.k_ir * s.omega * s.omega -
                                   cooling_coefficient(p, s.omega) * s.theta);
    };
    // Residual expressed as time derivatives so the convergence test is in natural units.
    auto derivative_norm = [&p](const Eigen::Vector3d &g) {
        return std::max({std::abs(g[0] / p.l_a), std::abs(g[1] / p.j), std::abs(g[2] / p.h)});
    };

    constexpr int max_iterations = 200;
    constexpr double target      = 1e-11;
    Eigen::Vector3d g            = residual(x);
    double norm                  = derivative_norm(g);
    for (int it = 0; it < max_iterations && norm > target; ++it) {
        const double r = armature_resistance(p, x.theta);
        Eigen::Matrix3d jac;
        jac << -r, -p.k_e, -p.r_a0 * p.alpha * x.i_a,
            p.k_e, -p.b, 0.0,
            2.0 * r * x.i_a, 2.0 * p.k_ir * x.omega - p.k_0 * p.k_t * x.theta,
            p.r_a0 * p.alpha * x.i_a * x.i_a - cooling_coefficient(p, x.omega);
        const Eigen::Vector3d step = jac.partialPivLu().solve(-g);
        if (!step.allFinite()) {
            throw DivergenceError("steady_state: Newton step is not finite");
        }

        double scale = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving) {
            MotorState trial{x.i_a + scale * step[0], x.omega + scale * step[1],
                             x.theta + scale * step[2]};
            const Eigen::Vector3d trial_g = residual(trial);
            const double trial_norm       = derivative_norm(trial_g);
            if (trial_norm < norm) {
                x        = trial;
                g        = trial_g;
                norm     = trial_norm;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) {
            break; // round-off floor reached
        }
    }
    if (!(norm < 1e-9)) {
        throw DivergenceError("steady_state: no convergence (residual " + format_double(norm) + ")");
    }
    if (p.alpha > 0.0 && x.theta <= -1.0 / p.alpha) {
        throw DivergenceError("steady_state: fixed point has non-positive resistance");
    }
    return x;
}

/// Observable targets plus the conventions that fix the under-determined constants.
struct CalibrationTargets {
    double supply_voltage    = 240.0;  ///< [V]
    double peak_current      = 60.0;   ///< inrush current, sets r_a0 = V / peak [A]
    double steady_current    = 7.27;   ///< [A]
    double steady_theta      = 80.0;   ///< [K above ambient]
    double resistance_rise   = 0.31;   ///< fractional rise of R at steady_theta
    double steady_speed      = 500.0;  ///< [rad/s]
    double settle_time       = 140.0 * 60.0; ///< time for theta to come within settle_band of steady_theta [s]
    double settle_band       = 1.0;    ///< [K]

    // Conventions (not observable from the targets above).
    double inductance              = 0.012; ///< [H]
    double mechanical_time_constant = 0.5;  ///< J R_a0 / (k_e^2 + R_a0 b) [s]
    double load_torque_fraction    = 0.5;   ///< share of steady torque taken by t_l
    double iron_loss_constant      = 1e-4;  ///< [W s^2/rad^2]
    double fan_coefficient         = 2e-3;  ///< k_t [s/rad]
};

/// Builds the parameter set whose steady state and thermal settling reproduce `t`.
///
/// The electrical steady-state equation fixes k_e, torque balance splits into b and t_l,
/// the thermal power balance fixes k_0, and h is chosen so that the quasi-static
/// temperature trajectory theta' = f(theta) / h needs exactly `settle_time` to climb from
/// 0 to steady_theta - settle_band: h = settle_time / integral(dtheta / f(theta)).
inline MotorParams calibrate_default_params(const CalibrationTargets &t = {})
{
    auto require = [](bool ok, const std::string &what) {
        if (!ok) {
            throw CalibrationError("infeasible calibration targets: " + what);
        }
    };
    require(t.supply_voltage > 0 && t.peak_current > 0 && t.steady_current > 0 &&
                t.steady_speed > 0 && t.steady_theta > 0 && t.settle_time > 0,
            "voltage, currents, speed, temperature and settle time must be positive");
    require(t.settle_band > 0 && t.settle_band < t.steady_theta, "0 < settle_band < steady_theta");
    require(t.resistance_rise >= 0, "resistance_rise >= 0");
    require(t.load_torque_fraction >= 0 && t.load_torque_fraction <= 1,
            "load_torque_fraction within [0, 1]");

    MotorParams p;
    p.v_a   = t.supply_voltage;
    p.r_a0  = t.supply_voltage / t.peak_current;
    p.alpha = t.resistance_rise / t.steady_theta;
    p.l_a   = t.inductance;
    p.k_ir  = t.iron_loss_constant;
    p.k_t   = t.fan_coefficient;

    const double r_ss = p.r_a0 * (1.0 + t.resistance_rise);
    const double emf  = p.v_a - r_ss * t.steady_current;
    require(emf > 0, "electrical balance V - R_ss i_ss = k_e omega_ss needs V > R_ss i_ss");
    p.k_e = emf / t.steady_speed;

    const double torque = p.k_e * t.steady_current;
    p.t_l               = t.load_torque_fraction * torque;
    p.b                 = (1.0 - t.load_torque_fraction) * torque / t.steady_speed;

    p.j = t.mechanical_time_constant * (p.k_e * p.k_e + p.r_a0 * p.b) / p.r_a0;
    require(p.j > 0, "mechanical time constant must be positive");

    const double heat = r_ss * t.steady_current * t.steady_current +
                        p.k_ir * t.steady_speed * t.steady_speed;
    p.k_0 = heat / ((1.0 + p.k_t * t.steady_speed) * t.steady_theta);
    require(p.k_0 > 0, "thermal balance P_l = k_0 (1 + k_t omega) theta needs k_0 > 0");

    // Quasi-static heating rate times h.
    p.h          = 1.0;
    auto heating = [&p](double theta) {
        const MotorState s = quasi_static_point(p, theta);
        return losses(p, s).total - cooling_coefficient(p, s.omega) * theta;
    };
    const double upper = t.steady_theta - t.settle_band;
    constexpr int intervals = 4000; // Simpson, even
    const double step        = upper / intervals;
    double integral          = 0.0;
    for (int k = 0; k <= intervals; ++k) {
        const double f = heating(k * step);
        require(f > 0, "motor must keep heating below steady_theta (power balance crosses early)");
        const double weight = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        integral += weight / f;
    }
    integral *= step / 3.0;
    p.h = t.settle_time / integral;

    validate(p);
    return p;
}

/// The shipped default motor (calibrated with the default targets).
inline const MotorParams &default_motor_params()
{
    static const MotorParams params = calibrate_default_params();
    return params;
}

/// Key-value text with one `name = value` line per constant.
inline std::string to_config_text(const MotorParams &p)
{
    std::string out;
    auto line = [&out](const char *key, double value, const char *unit) {
        out += key;
        out += " = ";
        out += format_double(value);
        out += "  # ";
        out += unit;
        out += '\n';
    };
    line("v_a", p.v_a, "V");
    line("r_a0", p.r_a0, "Ohm");
    line("alpha", p.alpha, "1/K");
    line("l_a", p.l_a, "H");
    line("k_e", p.k_e, "V s/rad");
    line("b", p.b, "N m s/rad");
    line("j", p.j, "kg m^2");
    line("t_l", p.t_l, "N m");
    line("k_ir", p.k_ir, "W s^2/rad^2");
    line("k_0", p.k_0, "W/K");
    line("k_t", p.k_t, "s/rad");
    line("h", p.h, "J/K");
    return out;
}

/// Parses a parameter file. Keys present override `base`; unknown keys are errors.
inline MotorParams parse_motor_params(std::string_view text, const MotorParams &base)
{
    MotorParams p = base;
    for (const auto &[key, value] : parse_key_values(text)) {
        double *field = nullptr;
        if (key == "v_a") field = &p.v_a;
        else if (key == "r_a0") field = &p.r_a0;
        else if (key == "alpha") field = &p.alpha;
        else if (key == "l_a") field = &p.l_a;
        else if (key == "k_e") field = &p.k_e;
        else if (key == "b") field = &p.b;
        else if (key == "j") field = &p.j;
        else if (key == "t_l") field = &p.t_l;
        else if (key == "k_ir") field = &p.k_ir;
        else if (key == "k_0") field = &p.k_0;
        else if (key == "k_t") field = &p.k_t;
        else if (key == "h") field = &p.h;
        else throw IoError("unknown motor parameter '" + key + "'");
        *field = parse_double(value, key);
    }
    validate(p);
    return p;
}

inline MotorParams parse_motor_params(std::string_view text)
{
    return parse_motor_params(text, default_motor_params());
}

} // namespace motorsense
