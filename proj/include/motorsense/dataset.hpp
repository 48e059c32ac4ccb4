/// @file dataset.hpp
/// @brief Training corpus for the virtual sensor: noisy (v, i) measurements mapped to
/// noiseless (omega, theta, R) targets, scaled to [-1, 1] and split train/test/validation.

#pragma once

#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"
#include "motorsense/motor_model.hpp"
#include "motorsense/simulator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace motorsense
{

/// Additive zero-mean white Gaussian noise on the measured channels.
struct NoiseSpec {
    std::uint64_t seed = 0;
    double sigma_v     = 0.0; ///< [V]
    double sigma_i     = 0.0; ///< [A]

    bool operator==(const NoiseSpec &) const = default;
};

struct NoisyMeasurements {
    std::vector<double> v;
    std::vector<double> i;
};

inline NoisyMeasurements add_noise(const Trajectory &traj, const NoiseSpec &spec)
{
    if (spec.sigma_v < 0.0 || spec.sigma_i < 0.0) {
        throw ArgumentError("add_noise: sigmas must be >= 0");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    NoisyMeasurements out;
    out.v.reserve(traj.size());
    out.i.reserve(traj.size());
    for (const auto &s : traj.samples) {
        const double zv = unit(rng);
        const double zi = unit(rng);
        out.v.push_back(s.v_a + spec.sigma_v * zv);
        out.i.push_back(s.state.i_a + spec.sigma_i * zi);
    }
    return out;
}

/// Noise sized as `fraction` of each channel's peak-to-peak swing over the trajectory.
/// A constant channel (the supply voltage) uses `fraction` of its magnitude instead.
inline NoiseSpec noise_from_fraction(const Trajectory &traj, double fraction, std::uint64_t seed)
{
    if (traj.empty()) {
        throw ArgumentError("noise_from_fraction: empty trajectory");
    }
    if (fraction < 0.0) {
        throw ArgumentError("noise_from_fraction: fraction must be >= 0");
    }
    auto sigma_for = [&](auto column) {
        double lo = column(traj.samples.front()), hi = lo;
        double peak = 0.0;
        for (const auto &s : traj.samples) {
            lo   = std::min(lo, column(s));
            hi   = std::max(hi, column(s));
            peak = std::max(peak, std::abs(column(s)));
        }
        return fraction * (hi > lo ? hi - lo : peak);
    };
    NoiseSpec spec;
    spec.seed    = seed;
    spec.sigma_v = sigma_for([](const TrajectorySample &s) { return s.v_a; });
    spec.sigma_i = sigma_for([](const TrajectorySample &s) { return s.state.i_a; });
    return spec;
}

enum class Split : std::uint8_t { train, test, validation };

inline const char *to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::validation: return "val";
    }
    return "?";
}

inline Split split_from_string(const std::string &text)
{
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    if (text == "val") return Split::validation;
    throw IoError("unknown split label '" + text + "'");
}

/// Time-ordered repeating pattern train, test, train, validation.
inline std::vector<Split> interleaved_split(std::size_t n_rows)
{
    if (n_rows < 4) {
        throw ArgumentError("interleaved_split: need at least 4 rows");
    }
    static constexpr Split pattern[4] = {Split::train, Split::test, Split::train, Split::validation};
    std::vector<Split> labels(n_rows);
    for (std::size_t k = 0; k < n_rows; ++k) {
        labels[k] = pattern[k % 4];
    }
    return labels;
}

/// Per-channel affine map [min, max] -> [-1, 1].
struct ChannelScaler {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t channels() const noexcept { return min.size(); }
    bool operator==(const ChannelScaler &) const = default;
};

/// Fits on the rows flagged in `use_row` (all rows when empty). With `pad_degenerate`, a
/// constant channel is widened by 1% of its magnitude (or 1 when it is zero) on each side
/// instead of raising.
inline ChannelScaler fit_scaler(const Eigen::MatrixXd &values, const std::vector<bool> &use_row = {},
                                bool pad_degenerate = false)
{
    if (!use_row.empty() && use_row.size() != static_cast<std::size_t>(values.rows())) {
        throw ArgumentError("fit_scaler: row mask size mismatch");
    }
    ChannelScaler sc;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
            if (!use_row.empty() && !use_row[static_cast<std::size_t>(r)]) {
                continue;
            }
            lo = std::min(lo, values(r, c));
            hi = std::max(hi, values(r, c));
        }
        if (!(lo <= hi)) {
            throw ArgumentError("fit_scaler: no rows to fit");
        }
        if (!(hi > lo)) {
            if (!pad_degenerate) {
                throw ArgumentError("fit_scaler: degenerate channel " + std::to_string(c) +
                                    " (max == min)");
            }
            const double pad = lo == 0.0 ? 1.0 : 0.01 * std::abs(lo);
            lo -= pad;
            hi += pad;
        }
        sc.min.push_back(lo);
        sc.max.push_back(hi);
    }
    return sc;
}

inline Eigen::MatrixXd apply(const ChannelScaler &sc, const Eigen::MatrixXd &values)
{
    if (static_cast<std::size_t>(values.cols()) != sc.channels()) {
        throw ArgumentError("apply: channel count mismatch");
    }
    Eigen::MatrixXd out(values.rows(), values.cols());
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double lo = sc.min[c], span = sc.max[c] - sc.min[c];
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
            out(r, c) = 2.0 * (values(r, c) - lo) / span - 1.0;
        }
    }
    return out;
}

inline Eigen::MatrixXd invert(const ChannelScaler &sc, const Eigen::MatrixXd &scaled)
{
    if (static_cast<std::size_t>(scaled.cols()) != sc.channels()) {
        throw ArgumentError("invert: channel count mismatch");
    }
    Eigen::MatrixXd out(scaled.rows(), scaled.cols());
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
        const double lo = sc.min[c], span = sc.max[c] - sc.min[c];
        for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
            out(r, c) = lo + 0.5 * (scaled(r, c) + 1.0) * span;
        }
    }
    return out;
}

/// Rows are trajectory samples in time order.
struct DataSet {
    std::vector<double> t;
    Eigen::MatrixXd raw_inputs;  ///< N x 2: v_noisy, i_noisy
    Eigen::MatrixXd raw_targets; ///< N x 3: omega, theta, resistance (noiseless)
    Eigen::MatrixXd inputs;      ///< scaled raw_inputs
    Eigen::MatrixXd targets;     ///< scaled raw_targets
    std::vector<Split> partition;
    ChannelScaler input_scaler;
    ChannelScaler target_scaler;
    NoiseSpec noise;

    std::size_t rows() const noexcept { return t.size(); }

    std::vector<Eigen::Index> rows_of(Split s) const
    {
        std::vector<Eigen::Index> idx;
        for (std::size_t k = 0; k < partition.size(); ++k) {
            if (partition[k] == s) {
                idx.push_back(static_cast<Eigen::Index>(k));
            }
        }
        return idx;
    }
};

namespace detail
{

/// Scales raw columns with scalers fitted on the training rows.
inline void finish_dataset(DataSet &ds, bool fit)
{
    if (fit) {
        std::vector<bool> train(ds.rows());
        for (std::size_t k = 0; k < ds.rows(); ++k) {
            train[k] = ds.partition[k] == Split::train;
        }
        ds.input_scaler  = fit_scaler(ds.raw_inputs, train, true);
        ds.target_scaler = fit_scaler(ds.raw_targets, train, false);
    }
    ds.inputs  = apply(ds.input_scaler, ds.raw_inputs);
    ds.targets = apply(ds.target_scaler, ds.raw_targets);
}

} // namespace detail

inline DataSet build_dataset(const Trajectory &traj, const MotorParams &params, const NoiseSpec &noise)
{
    if (traj.empty()) {
        throw ArgumentError("build_dataset: empty trajectory");
    }
    const std::size_t n          = traj.size();
    const NoisyMeasurements meas = add_noise(traj, noise);

    DataSet ds;
    ds.noise = noise;
    ds.t.resize(n);
    ds.raw_inputs.resize(static_cast<Eigen::Index>(n), 2);
    ds.raw_targets.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t k = 0; k < n; ++k) {
        const auto r        = static_cast<Eigen::Index>(k);
        const auto &s       = traj.samples[k];
        ds.t[k]             = s.t;
        ds.raw_inputs(r, 0) = meas.v[k];
        ds.raw_inputs(r, 1) = meas.i[k];
        ds.raw_targets(r, 0) = s.state.omega;
        ds.raw_targets(r, 1) = s.state.theta;
        ds.raw_targets(r, 2) = armature_resistance(params, s.state.theta);
    }
    ds.partition = interleaved_split(n);
    detail::finish_dataset(ds, true);
    return ds;
}

inline constexpr const char *dataset_csv_header = "t,split,v_noisy,i_noisy,omega,theta,resistance";

inline std::string to_csv(const DataSet &ds)
{
    std::string out = dataset_csv_header;
    out += '\n';
    for (std::size_t k = 0; k < ds.rows(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        out += format_double(ds.t[k]);
        out += ',';
        out += to_string(ds.partition[k]);
        for (double v : {ds.raw_inputs(r, 0), ds.raw_inputs(r, 1), ds.raw_targets(r, 0),
                         ds.raw_targets(r, 1), ds.raw_targets(r, 2)}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline constexpr const char *input_channel_names[2]  = {"v_noisy", "i_noisy"};
inline constexpr const char *target_channel_names[3] = {"omega", "theta", "resistance"};

/// Key-value sidecar: per-channel min/max of both scalers plus the noise spec.
inline std::string scalers_to_text(const DataSet &ds)
{
    std::string out;
    auto put = [&out](const std::string &key, const std::string &value) {
        out += key + " = " + value + "\n";
    };
    for (std::size_t c = 0; c < ds.input_scaler.channels(); ++c) {
        put(std::string("input.") + input_channel_names[c] + ".min", format_double(ds.input_scaler.min[c]));
        put(std::string("input.") + input_channel_names[c] + ".max", format_double(ds.input_scaler.max[c]));
    }
    for (std::size_t c = 0; c < ds.target_scaler.channels(); ++c) {
        put(std::string("target.") + target_channel_names[c] + ".min", format_double(ds.target_scaler.min[c]));
        put(std::string("target.") + target_channel_names[c] + ".max", format_double(ds.target_scaler.max[c]));
    }
    put("noise.seed", std::to_string(ds.noise.seed));
    put("noise.sigma_v", format_double(ds.noise.sigma_v));
    put("noise.sigma_i", format_double(ds.noise.sigma_i));
    return out;
}

namespace detail
{

inline void read_scalers(const std::string &text, ChannelScaler &in, ChannelScaler &out, NoiseSpec *noise)
{
    in.min.assign(2, NAN);
    in.max.assign(2, NAN);
    out.min.assign(3, NAN);
    out.max.assign(3, NAN);
    for (const auto &[key, value] : parse_key_values(text)) {
        bool known = false;
        for (std::size_t c = 0; c < 2 && !known; ++c) {
            const std::string base = std::string("input.") + input_channel_names[c];
            if (key == base + ".min") { in.min[c] = parse_double(value, key); known = true; }
            if (key == base + ".max") { in.max[c] = parse_double(value, key); known = true; }
        }
        for (std::size_t c = 0; c < 3 && !known; ++c) {
            const std::string base = std::string("target.") + target_channel_names[c];
            if (key == base + ".min") { out.min[c] = parse_double(value, key); known = true; }
            if (key == base + ".max") { out.max[c] = parse_double(value, key); known = true; }
        }
        if (!known && noise != nullptr) {
            if (key == "noise.seed") { noise->seed = std::stoull(value); known = true; }
            else if (key == "noise.sigma_v") { noise->sigma_v = parse_double(value, key); known = true; }
            else if (key == "noise.sigma_i") { noise->sigma_i = parse_double(value, key); known = true; }
        }
        if (!known) {
            throw IoError("scaler file: unknown key '" + key + "'");
        }
    }
    for (const ChannelScaler *sc : {&in, &out}) {
        for (std::size_t c = 0; c < sc->channels(); ++c) {
            if (!std::isfinite(sc->min[c]) || !std::isfinite(sc->max[c]) || !(sc->max[c] > sc->min[c])) {
                throw IoError("scaler file: missing or degenerate channel range");
            }
        }
    }
}

} // namespace detail

inline DataSet dataset_from_files(const std::string &csv_text, const std::string &scaler_text)
{
    DataSet ds;
    detail::read_scalers(scaler_text, ds.input_scaler, ds.target_scaler, &ds.noise);

    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != dataset_csv_header) {
        throw IoError("dataset CSV: unexpected header");
    }
    std::vector<std::array<double, 5>> values;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 7) {
            throw IoError("dataset CSV line " + std::to_string(line_no) + ": expected 7 fields");
        }
        ds.t.push_back(parse_double(f[0], "t"));
        ds.partition.push_back(split_from_string(f[1]));
        values.push_back({parse_double(f[2], "v_noisy"), parse_double(f[3], "i_noisy"),
                          parse_double(f[4], "omega"), parse_double(f[5], "theta"),
                          parse_double(f[6], "resistance")});
    }
    const auto n = static_cast<Eigen::Index>(values.size());
    ds.raw_inputs.resize(n, 2);
    ds.raw_targets.resize(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto &v = values[static_cast<std::size_t>(r)];
        ds.raw_inputs.row(r) << v[0], v[1];
        ds.raw_targets.row(r) << v[2], v[3], v[4];
    }
    detail::finish_dataset(ds, false);
    return ds;
}

} // namespace motorsense
