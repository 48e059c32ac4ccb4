/// @file evaluator.hpp
/// @brief Estimation error of a virtual sensor against the noiseless simulation.

#pragma once

#include "motorsense/cfnn.hpp"
#include "motorsense/dataset.hpp"
#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"
#include "motorsense/simulator.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace motorsense
{

/// Estimated and true (omega, theta, R) at every trajectory sample.
struct EstimationRun {
    std::vector<double> t;
    Eigen::MatrixXd truth;    ///< N x 3
    Eigen::MatrixXd estimate; ///< N x 3

    Eigen::MatrixXd error() const { return estimate - truth; }
};

inline Eigen::MatrixXd ground_truth(const Trajectory &traj, const MotorParams &params)
{
    Eigen::MatrixXd truth(static_cast<Eigen::Index>(traj.size()), 3);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto &s = traj.samples[k];
        truth.row(static_cast<Eigen::Index>(k)) << s.state.omega, s.state.theta,
            armature_resistance(params, s.state.theta);
    }
    return truth;
}

/// Feeds the noisy raw (v, i) measurements of `traj` to `estimator`, any callable mapping an
/// N x 2 raw input matrix to N x 3 raw (omega, theta, R) estimates.
template <typename Estimator>
EstimationRun run_estimator(const Estimator &estimator, const Trajectory &traj, const NoiseSpec &noise)
{
    if (traj.empty()) {
        throw ArgumentError("run_estimator: empty trajectory");
    }
    const NoisyMeasurements meas = add_noise(traj, noise);
    const auto n                 = static_cast<Eigen::Index>(traj.size());
    Eigen::MatrixXd raw(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
        raw(r, 0) = meas.v[static_cast<std::size_t>(r)];
        raw(r, 1) = meas.i[static_cast<std::size_t>(r)];
    }
    EstimationRun run;
    run.t.reserve(traj.size());
    for (const auto &s : traj.samples) {
        run.t.push_back(s.t);
    }
    run.truth    = ground_truth(traj, traj.params);
    run.estimate = estimator(raw);
    if (run.estimate.rows() != n || run.estimate.cols() != 3) {
        throw ArgumentError("run_estimator: estimator must return N x 3 estimates");
    }
    return run;
}

inline EstimationRun run_estimator(const Model &model, const Trajectory &traj, const NoiseSpec &noise)
{
    return run_estimator([&model](const Eigen::MatrixXd &raw) { return model.predict_raw(raw); }, traj, noise);
}

struct ChannelErrors {
    double max_abs_full        = 0.0;
    double max_abs_steady      = 0.0;
    double max_pct_steady      = 0.0; ///< 100 * max_abs_steady / |steady_value|
    double steady_value        = 0.0; ///< mean ground truth over the window
    double transient_peak      = 0.0; ///< == max_abs_full
    double transient_peak_time = 0.0;
    double transient_duration  = 0.0; ///< contiguous time with |error| >= transient_peak / 2
};

inline constexpr std::array<const char *, 3> channel_names{"omega", "theta", "resistance"};

struct EstimationReport {
    std::array<ChannelErrors, 3> channels;
    double window_start = 0.0; ///< [s]
    double window_end   = 0.0; ///< [s]
};

struct SteadyWindow {
    double start = 120.0 * 60.0; ///< [s]
    double end   = 160.0 * 60.0; ///< [s]
};

inline EstimationReport summarize(const EstimationRun &run, const SteadyWindow &window)
{
    if (run.t.empty()) {
        throw ArgumentError("evaluate: empty estimation run");
    }
    if (!(window.start <= window.end) || window.start < run.t.front() || window.end > run.t.back()) {
        throw ArgumentError("evaluate: steady-state window lies outside the trajectory");
    }
    const Eigen::MatrixXd err = run.error();
    EstimationReport report;
    report.window_start = window.start;
    report.window_end   = window.end;

    for (Eigen::Index c = 0; c < 3; ++c) {
        ChannelErrors &ch = report.channels[static_cast<std::size_t>(c)];
        double truth_sum  = 0.0;
        std::size_t in_window = 0;
        Eigen::Index peak_row = 0;
        for (Eigen::Index r = 0; r < err.rows(); ++r) {
            const double e = std::abs(err(r, c));
            if (e > ch.max_abs_full) {
                ch.max_abs_full = e;
                peak_row        = r;
            }
            const double t = run.t[static_cast<std::size_t>(r)];
            if (t >= window.start && t <= window.end) {
                ch.max_abs_steady = std::max(ch.max_abs_steady, e);
                truth_sum += run.truth(r, c);
                ++in_window;
            }
        }
        if (in_window == 0) {
            throw ArgumentError("evaluate: steady-state window contains no samples");
        }
        ch.steady_value   = truth_sum / static_cast<double>(in_window);
        ch.max_pct_steady = 100.0 * ch.max_abs_steady / std::abs(ch.steady_value);

        ch.transient_peak      = ch.max_abs_full;
        ch.transient_peak_time = run.t[static_cast<std::size_t>(peak_row)];
        if (ch.transient_peak > 0.0) {
            const double half = 0.5 * ch.transient_peak;
            Eigen::Index lo = peak_row, hi = peak_row;
            while (lo > 0 && std::abs(err(lo - 1, c)) >= half) --lo;
            while (hi + 1 < err.rows() && std::abs(err(hi + 1, c)) >= half) ++hi;
            ch.transient_duration = run.t[static_cast<std::size_t>(hi)] - run.t[static_cast<std::size_t>(lo)];
        }
    }
    return report;
}

template <typename Estimator>
EstimationReport evaluate(const Estimator &estimator, const Trajectory &traj, const NoiseSpec &noise,
                          const SteadyWindow &window = {})
{
    return summarize(run_estimator(estimator, traj, noise), window);
}

/// Largest |R_hat - R_a0 (1 + alpha theta_hat)|: how far the two estimated channels are from
/// obeying the resistance-temperature law together.
inline double cross_check_resistance(const EstimationRun &run, const MotorParams &params)
{
    double worst = 0.0;
    for (Eigen::Index r = 0; r < run.estimate.rows(); ++r) {
        const double implied = params.r_a0 * (1.0 + params.alpha * run.estimate(r, 1));
        worst                = std::max(worst, std::abs(run.estimate(r, 2) - implied));
    }
    return worst;
}

/// Acceptance bounds on the steady-state window errors.
struct ErrorBounds {
    double omega      = 0.04;  ///< [rad/s]
    double theta      = 0.6;   ///< [K]
    double resistance = 0.004; ///< [Ohm]
};

inline std::array<bool, 3> within_bounds(const EstimationReport &report, const ErrorBounds &bounds = {})
{
    return {report.channels[0].max_abs_steady < bounds.omega, report.channels[1].max_abs_steady < bounds.theta,
            report.channels[2].max_abs_steady < bounds.resistance};
}

inline std::string to_text(const EstimationReport &report)
{
    std::string out;
    auto put = [&out](const std::string &key, double value) {
        out += key + " = " + format_double(value) + "\n";
    };
    put("window.start_s", report.window_start);
    put("window.end_s", report.window_end);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::string p = channel_names[c];
        const ChannelErrors &ch = report.channels[c];
        put(p + ".max_abs_full", ch.max_abs_full);
        put(p + ".max_abs_steady", ch.max_abs_steady);
        put(p + ".max_pct_steady", ch.max_pct_steady);
        put(p + ".steady_value", ch.steady_value);
        put(p + ".transient_peak", ch.transient_peak);
        put(p + ".transient_peak_time_s", ch.transient_peak_time);
        put(p + ".transient_duration_s", ch.transient_duration);
    }
    return out;
}

inline constexpr const char *plot_csv_header = "t,truth,estimate,error";

/// One CSV per channel (`<dir>/<channel>.csv`) with columns t,truth,estimate,error.
inline std::vector<std::string> emit_plot_data(const EstimationRun &run, const std::string &dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create plot directory '" + dir + "': " + ec.message());
    }
    std::vector<std::string> paths;
    for (std::size_t c = 0; c < 3; ++c) {
        std::string out = plot_csv_header;
        out += '\n';
        const auto col = static_cast<Eigen::Index>(c);
        for (std::size_t k = 0; k < run.t.size(); ++k) {
            const auto r       = static_cast<Eigen::Index>(k);
            const double truth = run.truth(r, col);
            const double est   = run.estimate(r, col);
            out += format_double(run.t[k]) + "," + format_double(truth) + "," + format_double(est) + "," +
                   format_double(est - truth) + "\n";
        }
        const std::string path = (std::filesystem::path(dir) / (std::string(channel_names[c]) + ".csv")).string();
        write_file(path, out);
        paths.push_back(path);
    }
    return paths;
}

inline std::vector<std::string> emit_plot_data(const Trajectory &traj, const Model &model, const NoiseSpec &noise,
                                               const std::string &dir)
{
    return emit_plot_data(run_estimator(model, traj, noise), dir);
}

} // namespace motorsense
