// Command-line front end: simulate -> dataset -> train -> eval, plus an architecture sweep.

#include "motorsense/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace
{

std::vector<motorsense::Topology> parse_grid(const std::string &text)
{
    std::vector<motorsense::Topology> grid;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto semi        = text.find(';', start);
        const std::string cell = text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
        motorsense::Topology t;
        t.hidden_sizes = motorsense::hidden_from_string(cell);
        grid.push_back(t);
        if (semi == std::string::npos) {
            break;
        }
        start = semi + 1;
    }
    return grid;
}

void print_report(const motorsense::EvalOutcome &out, const motorsense::ErrorBounds &bounds)
{
    const double limits[3] = {bounds.omega, bounds.theta, bounds.resistance};
    const char *units[3]   = {"rad/s", "K", "Ohm"};
    std::printf("steady-state window [%.0f, %.0f] s, noise sigma_v=%.4g V sigma_i=%.4g A\n",
                out.report.window_start, out.report.window_end, out.noise.sigma_v, out.noise.sigma_i);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto &ch = out.report.channels[c];
        std::printf("%-10s steady max |err| %.6g %s (%.4g%%, bound %.4g) %s | full-horizon %.6g, peak at %.4g s "
                    "lasting %.4g s\n",
                    motorsense::channel_names[c], ch.max_abs_steady, units[c], ch.max_pct_steady, limits[c],
                    out.passed[c] ? "PASS" : "FAIL", ch.max_abs_full, ch.transient_peak_time, ch.transient_duration);
    }
    std::printf("resistance consistency max |R_hat - R(theta_hat)| = %.6g Ohm\n", out.resistance_consistency);
}

} // namespace

int main(int argc, char **argv)
{
    using namespace motorsense;

    CLI::App app{"Virtual speed/temperature/resistance sensor for a brushed DC motor"};
    app.set_config("--config", "", "Read option values from a key = value file");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig cfg;
    std::string params_path;
    std::string hidden = hidden_to_string(cfg.topology.hidden_sizes);
    std::string grid   = "4;8;12,8";
    std::size_t batch_rows = *cfg.train.batch_rows;
    double window_start_min = cfg.window.start / 60.0;
    double window_end_min   = cfg.window.end / 60.0;
    std::optional<double> sigma_v, sigma_i;

    app.add_option("--out-dir", cfg.out_dir, "Directory for all stage files")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Global seed (noise, initialization, subsampling)")->capture_default_str();
    app.add_option("--params", params_path, "Motor parameter file (name = value); defaults are calibrated");
    app.add_option("--t-end", cfg.sim.t_end, "Simulation horizon [s]")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--rel-tol", cfg.sim.rel_tol, "Integrator relative tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-step", cfg.sim.max_step, "Largest integration step [s]")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--fast-interval", cfg.sim.sample_interval_fast, "Sampling interval during the fast window [s]")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--slow-interval", cfg.sim.sample_interval_slow, "Sampling interval after the fast window [s]")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--fast-window", cfg.sim.fast_window, "Duration sampled at the fast rate [s]")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--noise-fraction", cfg.noise_fraction, "Noise sigma as a fraction of channel peak-to-peak")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--sigma-v", sigma_v, "Voltage noise sigma [V] (overrides --noise-fraction)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--sigma-i", sigma_i, "Current noise sigma [A] (overrides --noise-fraction)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--hidden", hidden, "Hidden layer sizes, comma separated ('-' for none)")->capture_default_str();
    app.add_option("--epochs", cfg.train.max_epochs, "Maximum training epochs")->capture_default_str();
    app.add_option("--goal", cfg.train.goal, "Scaled train MSE goal")->capture_default_str();
    app.add_option("--mu-init", cfg.train.mu_init, "Initial LM damping")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--batch-rows", batch_rows, "Training rows per epoch (subsampled above this)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--window-start", window_start_min, "Steady-state window start [min]")->capture_default_str();
    app.add_option("--window-end", window_end_min, "Steady-state window end [min]")->capture_default_str();
    app.add_option("--grid", grid, "Sweep grid: hidden layouts separated by ';' (e.g. \"4;12,8\")")
        ->capture_default_str();

    auto *simulate = app.add_subcommand("simulate", "Integrate the motor model and write trajectory.csv");
    auto *dataset  = app.add_subcommand("dataset", "Add measurement noise, scale and split into dataset.csv");
    auto *train    = app.add_subcommand("train", "Train the cascade-forward estimator (model.txt, history.csv)");
    auto *eval     = app.add_subcommand("eval", "Evaluate the estimator against the noiseless trajectory");
    auto *sweep    = app.add_subcommand("sweep", "Train each topology of --grid and rank by validation MSE");

    CLI11_PARSE(app, argc, argv);

    if (!params_path.empty()) {
        cfg.params_path = params_path;
    }
    cfg.sigma_v           = sigma_v;
    cfg.sigma_i           = sigma_i;
    cfg.train.batch_rows  = batch_rows;
    cfg.window.start      = window_start_min * 60.0;
    cfg.window.end        = window_end_min * 60.0;

    try {
        cfg.topology.hidden_sizes = hidden_from_string(hidden);
        cfg.sweep_grid            = parse_grid(grid);

        if (simulate->parsed()) {
            const SimulationSummary s = cmd_simulate(cfg);
            std::cout << to_text(s);
        } else if (dataset->parsed()) {
            const DataSet ds = cmd_dataset(cfg);
            std::printf("rows = %zu (train %zu, test %zu, val %zu)\nsigma_v = %.6g\nsigma_i = %.6g\n", ds.rows(),
                        ds.rows_of(Split::train).size(), ds.rows_of(Split::test).size(),
                        ds.rows_of(Split::validation).size(), ds.noise.sigma_v, ds.noise.sigma_i);
        } else if (train->parsed()) {
            const TrainResult r = cmd_train(cfg);
            std::cout << read_file(stage_path(cfg, files::train_summary));
            (void)r;
        } else if (eval->parsed()) {
            const EvalOutcome out = cmd_eval(cfg);
            print_report(out, cfg.bounds);
            return out.all_passed() ? 0 : 3;
        } else if (sweep->parsed()) {
            for (const SweepCell &c : cmd_sweep(cfg)) {
                std::printf("%-8s params=%4zu val_mse=%.6g train_mse=%.6g epochs=%zu %s\n",
                            hidden_to_string(c.topology.hidden_sizes).c_str(), c.topology.parameter_count(),
                            c.val_mse, c.train_mse, c.epochs, c.ok ? to_string(c.stop) : c.error.c_str());
            }
        }
    } catch (const StageDependencyError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
