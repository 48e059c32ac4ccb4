#include "motorsense/evaluator.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace motorsense;

namespace
{

const Trajectory &short_run()
{
    static const Trajectory traj = [] {
        SimConfig c;
        c.t_end       = 900.0;
        c.fast_window = 2.0;
        return integrate(default_motor_params(), c);
    }();
    return traj;
}

const SteadyWindow window{300.0, 900.0};

/// Returns the noiseless truth regardless of its inputs.
struct Oracle {
    Eigen::MatrixXd truth;
    Eigen::MatrixXd operator()(const Eigen::MatrixXd &) const { return truth; }
};

/// Crude hand-written estimator driven by the measured channels.
Eigen::MatrixXd back_emf_estimator(const Eigen::MatrixXd &raw)
{
    const MotorParams p = default_motor_params();
    Eigen::MatrixXd out(raw.rows(), 3);
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        const double theta = 80.0 * (1.0 - raw(r, 1) / 60.0);
        const double res   = p.r_a0 * (1.0 + p.alpha * theta);
        out(r, 0)          = (raw(r, 0) - res * raw(r, 1)) / p.k_e;
        out(r, 1)          = theta;
        out(r, 2)          = res;
    }
    return out;
}

std::string slurp(const std::filesystem::path &p)
{
    return read_file(p.string());
}

} // namespace

TEST(Evaluate, OracleHasZeroError)
{
    const Trajectory &traj = short_run();
    const Oracle oracle{ground_truth(traj, traj.params)};
    const EstimationReport rep = evaluate(oracle, traj, NoiseSpec{1, 2.4, 0.5}, window);
    for (const ChannelErrors &ch : rep.channels) {
        EXPECT_EQ(ch.max_abs_full, 0.0);
        EXPECT_EQ(ch.max_abs_steady, 0.0);
        EXPECT_EQ(ch.max_pct_steady, 0.0);
        EXPECT_EQ(ch.transient_duration, 0.0);
    }
}

TEST(Evaluate, ConstantOffsetGivesExactAbsoluteAndPercentErrors)
{
    const Trajectory &traj = short_run();
    const Eigen::MatrixXd truth = ground_truth(traj, traj.params);
    const Eigen::RowVector3d offset(0.5, -0.2, 0.001);
    const Oracle biased{truth.rowwise() + offset};
    const EstimationReport rep = evaluate(biased, traj, NoiseSpec{}, window);

    for (std::size_t c = 0; c < 3; ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        double sum     = 0.0;
        int count      = 0;
        for (std::size_t k = 0; k < traj.size(); ++k) {
            if (traj.samples[k].t >= window.start && traj.samples[k].t <= window.end) {
                sum += truth(static_cast<Eigen::Index>(k), col);
                ++count;
            }
        }
        const double mean = sum / count;
        const ChannelErrors &ch = rep.channels[c];
        EXPECT_NEAR(ch.max_abs_steady, std::abs(offset[col]), 1e-9);
        EXPECT_NEAR(ch.steady_value, mean, 1e-9 * std::abs(mean));
        EXPECT_NEAR(ch.max_pct_steady, 100.0 * std::abs(offset[col]) / std::abs(mean), 1e-6);
    }
}

TEST(Evaluate, SteadyErrorNeverExceedsFullHorizon)
{
    const Trajectory &traj = short_run();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const EstimationReport rep = evaluate(back_emf_estimator, traj, NoiseSpec{seed, 1.0, 0.3}, window);
        for (const ChannelErrors &ch : rep.channels) {
            EXPECT_LE(ch.max_abs_steady, ch.max_abs_full);
            EXPECT_EQ(ch.transient_peak, ch.max_abs_full);
        }
    }
}

TEST(Evaluate, WindowOutsideTrajectoryIsError)
{
    const Trajectory &traj = short_run();
    EXPECT_THROW(evaluate(back_emf_estimator, traj, NoiseSpec{}, SteadyWindow{300.0, 2000.0}), ArgumentError);
    EXPECT_THROW(evaluate(back_emf_estimator, traj, NoiseSpec{}, SteadyWindow{500.0, 400.0}), ArgumentError);
    EXPECT_THROW(evaluate(back_emf_estimator, Trajectory{}, NoiseSpec{}, window), ArgumentError);
}

TEST(Evaluate, EstimatorShapeIsChecked)
{
    auto wrong = [](const Eigen::MatrixXd &raw) { return Eigen::MatrixXd::Zero(raw.rows(), 2).eval(); };
    EXPECT_THROW(run_estimator(wrong, short_run(), NoiseSpec{}), ArgumentError);
}

TEST(Summarize, TransientPeakAndHalfPeakDuration)
{
    EstimationRun run;
    run.t        = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    run.truth    = Eigen::MatrixXd::Ones(8, 3);
    run.estimate = run.truth;
    const double err[8] = {0.0, 0.2, 1.0, 0.8, 0.5, 0.1, 0.6, 0.0};
    for (Eigen::Index r = 0; r < 8; ++r) run.estimate(r, 0) += err[r];
    const EstimationReport rep = summarize(run, SteadyWindow{0.5, 0.7});
    const ChannelErrors &ch    = rep.channels[0];
    EXPECT_EQ(ch.transient_peak, 1.0);
    EXPECT_EQ(ch.transient_peak_time, 0.2);
    EXPECT_NEAR(ch.transient_duration, 0.2, 1e-15); // 0.2 .. 0.4, the later 0.6 is not contiguous
    EXPECT_NEAR(ch.max_abs_steady, 0.6, 1e-15);
}

TEST(CrossCheck, OracleConsistentAndZeroedResistanceFlagged)
{
    const Trajectory &traj = short_run();
    const Oracle oracle{ground_truth(traj, traj.params)};
    const EstimationRun run = run_estimator(oracle, traj, NoiseSpec{});
    EXPECT_LT(cross_check_resistance(run, traj.params), 1e-12);

    EstimationRun zeroed = run;
    zeroed.estimate.col(2).setZero();
    const double worst = run.truth.col(2).maxCoeff();
    EXPECT_NEAR(cross_check_resistance(zeroed, traj.params), worst, 1e-12);
}

TEST(Bounds, StrictComparison)
{
    EstimationReport rep;
    rep.channels[0].max_abs_steady = 0.04;
    rep.channels[1].max_abs_steady = 0.59;
    rep.channels[2].max_abs_steady = 0.0;
    const auto ok = within_bounds(rep);
    EXPECT_FALSE(ok[0]);
    EXPECT_TRUE(ok[1]);
    EXPECT_TRUE(ok[2]);
}

TEST(PlotData, FilesRowsAndErrorColumn)
{
    const Trajectory &traj = short_run();
    const auto dir         = std::filesystem::path(testing::TempDir()) / "motorsense_plots_a";
    std::filesystem::remove_all(dir);
    const EstimationRun run = run_estimator(back_emf_estimator, traj, NoiseSpec{3, 1.0, 0.2});
    const auto paths        = emit_plot_data(run, dir.string());
    ASSERT_EQ(paths.size(), 3u);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(std::filesystem::path(paths[c]).filename().string(), std::string(channel_names[c]) + ".csv");
        const std::string text = slurp(paths[c]);
        EXPECT_EQ(text.substr(0, text.find('\n')), plot_csv_header);
        EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), traj.size() + 1);

        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto f = split_csv_line(line);
            ASSERT_EQ(f.size(), 4u);
            EXPECT_EQ(parse_double(f[3], "error"), parse_double(f[2], "est") - parse_double(f[1], "truth"));
        }
    }
}

TEST(PlotData, ByteDeterministic)
{
    const Trajectory &traj = short_run();
    const auto a           = std::filesystem::path(testing::TempDir()) / "motorsense_plots_b";
    const auto b           = std::filesystem::path(testing::TempDir()) / "motorsense_plots_c";
    Model model{init_network(Topology{}, 3), ChannelScaler{{230, 0}, {250, 60}},
                ChannelScaler{{0, 0, 4}, {500, 80, 5.24}}};
    emit_plot_data(traj, model, NoiseSpec{5, 2.4, 0.5}, a.string());
    emit_plot_data(traj, model, NoiseSpec{5, 2.4, 0.5}, b.string());
    for (const char *name : channel_names) {
        EXPECT_EQ(slurp(a / (std::string(name) + ".csv")), slurp(b / (std::string(name) + ".csv")));
    }
}

TEST(Evaluate, SteadyErrorGrowsWithNoiseForMostSeeds)
{
    const Trajectory &traj = short_run();
    const double levels[]  = {0.0, 0.001, 0.005, 0.02};
    int monotone_runs = 0, runs = 0;
    for (std::uint64_t seed = 1; seed <= 7; ++seed) {
        std::array<double, 4> err{};
        for (std::size_t k = 0; k < 4; ++k) {
            const NoiseSpec n{seed, levels[k] * 240.0, levels[k] * 60.0};
            err[k] = evaluate(back_emf_estimator, traj, n, window).channels[0].max_abs_steady;
        }
        ++runs;
        if (std::is_sorted(err.begin(), err.end())) ++monotone_runs;
    }
    EXPECT_GT(2 * monotone_runs, runs);
}
