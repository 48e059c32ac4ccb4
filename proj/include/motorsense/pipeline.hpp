/// @file pipeline.hpp
/// @brief File-based stages simulate -> dataset -> train -> eval (and sweep).
///
/// Each stage reads the files written by the previous one from the output directory and
/// writes its own; given the same configuration and seed every file is byte-identical
/// across runs.

#pragma once

#include "motorsense/cfnn.hpp"
#include "motorsense/dataset.hpp"
#include "motorsense/evaluator.hpp"
#include "motorsense/key_value.hpp"
#include "motorsense/motor_model.hpp"
#include "motorsense/simulator.hpp"
#include "motorsense/trainer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace motorsense
{

namespace files
{
inline constexpr const char *motor_params    = "motor.cfg";
inline constexpr const char *trajectory      = "trajectory.csv";
inline constexpr const char *sim_summary     = "simulate_summary.txt";
inline constexpr const char *dataset         = "dataset.csv";
inline constexpr const char *dataset_scalers = "dataset_scalers.txt";
inline constexpr const char *model           = "model.txt";
inline constexpr const char *history         = "history.csv";
inline constexpr const char *train_summary   = "train_summary.txt";
inline constexpr const char *report          = "report.txt";
inline constexpr const char *plots           = "plots";
inline constexpr const char *sweep           = "sweep.csv";
} // namespace files

struct RunConfig {
    std::string out_dir = "out";
    std::optional<std::string> params_path; ///< calibrated defaults when absent
    std::uint64_t seed = 1;                 ///< noise, weight init and subsampling; eval noise uses seed + 1
    SimConfig sim;
    double noise_fraction = 0.01; ///< of each channel's peak-to-peak
    std::optional<double> sigma_v;
    std::optional<double> sigma_i;
    Topology topology;
    TrainConfig train;
    SteadyWindow window;
    ErrorBounds bounds;
    std::vector<Topology> sweep_grid{Topology{2, {4}, 3}, Topology{2, {8}, 3}, Topology{2, {12, 8}, 3}};
};

inline std::string stage_path(const RunConfig &cfg, const char *name)
{
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline std::string read_stage_input(const RunConfig &cfg, const char *name, const char *producer)
{
    const std::string path = stage_path(cfg, name);
    if (!std::filesystem::exists(path)) {
        throw StageDependencyError("missing '" + path + "': run the '" + producer + "' stage first");
    }
    return read_file(path);
}

struct SimulationSummary {
    double peak_current        = 0.0;
    double final_current       = 0.0;
    double final_omega         = 0.0;
    double final_theta         = 0.0;
    double steady_theta        = 0.0; ///< fixed point of the model
    double resistance_rise_pct = 0.0; ///< at t_end
    std::optional<double> settle_time;      ///< detect_steady_state on the whole state
    std::optional<double> theta_band_time;  ///< theta stays within 1 K of steady_theta from here on
};

/// Earliest time after which theta stays within `band` of `target` until the end.
inline std::optional<double> time_within_band(const Trajectory &traj, double target, double band)
{
    std::optional<double> since;
    for (const auto &s : traj.samples) {
        if (std::abs(s.state.theta - target) <= band) {
            if (!since) {
                since = s.t;
            }
        } else {
            since.reset();
        }
    }
    return since;
}

inline SimulationSummary summarize(const Trajectory &traj, const MotorParams &params)
{
    SimulationSummary s;
    for (const auto &smp : traj.samples) {
        s.peak_current = std::max(s.peak_current, smp.state.i_a);
    }
    const auto &last      = traj.samples.back();
    s.final_current       = last.state.i_a;
    s.final_omega         = last.state.omega;
    s.final_theta         = last.state.theta;
    s.steady_theta        = steady_state(params).theta;
    s.resistance_rise_pct = 100.0 * (last.resistance / params.r_a0 - 1.0);
    const double duration = last.t - traj.samples.front().t;
    s.settle_time         = detect_steady_state(traj, std::min(60.0, duration), MotorState{0.05, 1.0, 1.0});
    s.theta_band_time     = time_within_band(traj, s.steady_theta, 1.0);
    return s;
}

inline std::string to_text(const SimulationSummary &s)
{
    std::string out;
    auto put = [&out](const char *key, double v) { out += std::string(key) + " = " + format_double(v) + "\n"; };
    put("peak_current_a", s.peak_current);
    put("steady_current_a", s.final_current);
    put("final_omega_rad_s", s.final_omega);
    put("final_theta_k", s.final_theta);
    put("steady_theta_k", s.steady_theta);
    put("resistance_rise_pct", s.resistance_rise_pct);
    out += std::string("settle_time_s = ") + (s.settle_time ? format_double(*s.settle_time) : "none") + "\n";
    out += std::string("theta_within_1k_time_s = ") +
           (s.theta_band_time ? format_double(*s.theta_band_time) : "none") + "\n";
    return out;
}

inline MotorParams load_params(const RunConfig &cfg)
{
    return cfg.params_path ? parse_motor_params(read_file(*cfg.params_path)) : default_motor_params();
}

inline SimulationSummary cmd_simulate(const RunConfig &cfg)
{
    const MotorParams params = load_params(cfg);
    const Trajectory traj    = integrate(params, MotorState{}, cfg.sim);
    std::filesystem::create_directories(cfg.out_dir);
    write_file(stage_path(cfg, files::motor_params), to_config_text(params));
    write_file(stage_path(cfg, files::trajectory), to_csv(traj));
    const SimulationSummary summary = summarize(traj, params);
    write_file(stage_path(cfg, files::sim_summary), to_text(summary));
    return summary;
}

inline MotorParams load_stage_params(const RunConfig &cfg)
{
    return parse_motor_params(read_stage_input(cfg, files::motor_params, "simulate"));
}

inline Trajectory load_trajectory(const RunConfig &cfg)
{
    return trajectory_from_csv(read_stage_input(cfg, files::trajectory, "simulate"), load_stage_params(cfg));
}

inline NoiseSpec noise_for(const RunConfig &cfg, const Trajectory &traj)
{
    NoiseSpec noise = noise_from_fraction(traj, cfg.noise_fraction, cfg.seed);
    if (cfg.sigma_v) noise.sigma_v = *cfg.sigma_v;
    if (cfg.sigma_i) noise.sigma_i = *cfg.sigma_i;
    return noise;
}

inline DataSet cmd_dataset(const RunConfig &cfg)
{
    const Trajectory traj = load_trajectory(cfg);
    const DataSet ds      = build_dataset(traj, traj.params, noise_for(cfg, traj));
    write_file(stage_path(cfg, files::dataset), to_csv(ds));
    write_file(stage_path(cfg, files::dataset_scalers), scalers_to_text(ds));
    return ds;
}

inline DataSet load_dataset(const RunConfig &cfg)
{
    return dataset_from_files(read_stage_input(cfg, files::dataset, "dataset"),
                              read_stage_input(cfg, files::dataset_scalers, "dataset"));
}

inline TrainResult cmd_train(const RunConfig &cfg)
{
    const DataSet ds   = load_dataset(cfg);
    TrainConfig tc     = cfg.train;
    tc.seed            = cfg.seed;
    const TrainResult r = train(init_network(cfg.topology, cfg.seed), ds, tc);
    write_file(stage_path(cfg, files::model), to_text(Model{r.network, ds.input_scaler, ds.target_scaler}));
    write_file(stage_path(cfg, files::history), history_to_csv(r.history()));

    const EpochRecord &last = r.history().back();
    std::string summary;
    summary += "hidden = " + hidden_to_string(cfg.topology.hidden_sizes) + "\n";
    summary += "parameters = " + std::to_string(r.network.parameter_count()) + "\n";
    summary += "stop = " + std::string(to_string(r.stop)) + "\n";
    summary += "epochs = " + std::to_string(last.epoch) + "\n";
    summary += "final_train_mse_scaled = " + format_double(last.train_mse) + "\n";
    summary += "best_epoch = " + std::to_string(r.best_epoch) + "\n";
    summary += "best_val_mse_scaled = " + format_double(r.best_val_mse) + "\n";
    summary += "goal = " + format_double(tc.goal) + "\n";
    write_file(stage_path(cfg, files::train_summary), summary);
    return r;
}

struct EvalOutcome {
    EstimationReport report;
    std::array<bool, 3> passed{};
    double resistance_consistency = 0.0;
    NoiseSpec noise;

    bool all_passed() const { return passed[0] && passed[1] && passed[2]; }
};

inline EvalOutcome cmd_eval(const RunConfig &cfg)
{
    const Trajectory traj = load_trajectory(cfg);
    const Model model     = model_from_text(read_stage_input(cfg, files::model, "train"));
    NoiseSpec noise;
    ChannelScaler unused_in, unused_out;
    detail::read_scalers(read_stage_input(cfg, files::dataset_scalers, "dataset"), unused_in, unused_out, &noise);
    noise.seed += 1; // fresh realization, same noise level as the training data

    EvalOutcome out;
    out.noise                  = noise;
    const EstimationRun run    = run_estimator(model, traj, noise);
    out.report                 = summarize(run, cfg.window);
    out.passed                 = within_bounds(out.report, cfg.bounds);
    out.resistance_consistency = cross_check_resistance(run, traj.params);

    std::string text = to_text(out.report);
    text += "resistance_consistency_ohm = " + format_double(out.resistance_consistency) + "\n";
    text += "noise.seed = " + std::to_string(noise.seed) + "\n";
    text += "noise.sigma_v = " + format_double(noise.sigma_v) + "\n";
    text += "noise.sigma_i = " + format_double(noise.sigma_i) + "\n";
    text += std::string("bound.omega = ") + (out.passed[0] ? "pass" : "fail") + "\n";
    text += std::string("bound.theta = ") + (out.passed[1] ? "pass" : "fail") + "\n";
    text += std::string("bound.resistance = ") + (out.passed[2] ? "pass" : "fail") + "\n";
    write_file(stage_path(cfg, files::report), text);
    emit_plot_data(run, stage_path(cfg, files::plots));
    return out;
}

inline std::vector<SweepCell> cmd_sweep(const RunConfig &cfg)
{
    const DataSet ds = load_dataset(cfg);
    TrainConfig tc   = cfg.train;
    tc.seed          = cfg.seed;
    std::vector<Topology> grid = cfg.sweep_grid;
    for (Topology &t : grid) {
        t.n_inputs  = 2;
        t.n_outputs = 3;
    }
    const std::vector<SweepCell> cells = sweep(ds, grid, tc);
    write_file(stage_path(cfg, files::sweep), sweep_to_csv(cells));
    return cells;
}

} // namespace motorsense
