#include "motorsense/trainer.hpp"

#include <gtest/gtest.h>

using namespace motorsense;

namespace
{

DataSet make_dataset(const Eigen::MatrixXd &x, const Eigen::MatrixXd &y)
{
    DataSet ds;
    ds.t.resize(static_cast<std::size_t>(x.rows()));
    for (std::size_t k = 0; k < ds.t.size(); ++k) ds.t[k] = static_cast<double>(k);
    ds.raw_inputs  = x;
    ds.raw_targets = y;
    ds.partition   = interleaved_split(ds.t.size());
    detail::finish_dataset(ds, true);
    return ds;
}

/// y = sin(pi x) on 200 points of [-1, 1].
const DataSet &sine_dataset()
{
    static const DataSet ds = [] {
        const Eigen::Index n = 200;
        Eigen::MatrixXd x(n, 1), y(n, 1);
        for (Eigen::Index k = 0; k < n; ++k) {
            x(k, 0) = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n - 1);
            y(k, 0) = std::sin(M_PI * x(k, 0));
        }
        return make_dataset(x, y);
    }();
    return ds;
}

/// Noisy affine data for a 2-input linear network.
Batch affine_batch(std::mt19937_64 &rng, Eigen::Index n)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Batch b;
    b.inputs.resize(n, 2);
    b.targets.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        b.inputs(r, 0)  = u(rng);
        b.inputs(r, 1)  = u(rng);
        b.targets(r, 0) = 0.7 * b.inputs(r, 0) - 0.2 * b.inputs(r, 1) + 0.1 + 0.05 * u(rng);
    }
    return b;
}

Eigen::VectorXd least_squares(const Batch &b)
{
    Eigen::MatrixXd a(b.inputs.rows(), 3);
    a << b.inputs, Eigen::VectorXd::Ones(b.inputs.rows());
    return a.colPivHouseholderQr().solve(b.targets.col(0));
}

TrainState state_for(const Network &net, double alpha, double beta, double mu)
{
    return TrainState{net, alpha, beta, 0.0, mu, {}};
}

} // namespace

TEST(Objective, Examples)
{
    Network net(Topology{1, {}, 1});
    Eigen::VectorXd w(2);
    w << 2.0, 1.0; // y = 2x + 1
    net.set_weights(w);
    Batch b;
    b.inputs.resize(2, 1);
    b.targets.resize(2, 1);
    b.inputs << 0.0, 1.0;
    b.targets << 0.0, 0.0;
    const Objective o = objective(net, b, 0.5, 2.0);
    EXPECT_DOUBLE_EQ(o.e_d, 1.0 + 9.0);
    EXPECT_DOUBLE_EQ(o.e_w, 5.0);
    EXPECT_DOUBLE_EQ(o.f, 2.0 * 10.0 + 0.5 * 5.0);
    EXPECT_THROW(objective(net, Batch{}, 0.0, 1.0), ArgumentError);
}

TEST(LmStep, TinyDampingOnLinearModelLandsOnLeastSquares)
{
    std::mt19937_64 rng(3);
    const Batch b = affine_batch(rng, 50);
    TrainState s  = state_for(init_network(Topology{2, {}, 1}, 1), 0.0, 1.0, 1e-12);
    TrainConfig cfg;
    const LmStepResult r = lm_step(s, b, cfg);
    ASSERT_TRUE(r.accepted);
    EXPECT_EQ(r.trials, 1);
    const Eigen::VectorXd ls = least_squares(b);
    EXPECT_LT((s.network.weights() - ls).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_DOUBLE_EQ(s.mu, 1e-13);
}

TEST(LmStep, LargeDampingFollowsSteepestDescent)
{
    std::mt19937_64 rng(5);
    const Batch b     = affine_batch(rng, 40);
    const Network net = init_network(Topology{2, {4}, 1}, 9);
    TrainState s      = state_for(net, 0.01, 1.0, 1e6);
    const NormalEquations ne = assemble(net, b, 512);
    const Eigen::VectorXd g  = half_gradient(ne, net, s.alpha, s.beta);
    TrainConfig cfg;
    const LmStepResult r = lm_step(s, b, ne, cfg);
    ASSERT_TRUE(r.accepted);
    const Eigen::VectorXd dw = s.network.weights() - net.weights();
    EXPECT_GT(-dw.dot(g) / (dw.norm() * g.norm()), 1.0 - 1e-3);
}

TEST(LmStep, RejectedTrialsLeaveWeightsBitIdentical)
{
    std::mt19937_64 rng(6);
    const Batch b     = affine_batch(rng, 30);
    const Network net = init_network(Topology{2, {}, 1}, 2);
    TrainState s      = state_for(net, 0.0, 1.0, 1e-3);
    NormalEquations ne = assemble(net, b, 512);
    ne.jtr             = -ne.jtr; // every proposed step now climbs
    TrainConfig cfg;
    cfg.mu_max           = 1e4;
    const LmStepResult r = lm_step(s, b, ne, cfg);
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(r.trials, 8); // mu = 1e-3 ... 1e4
    EXPECT_GT(s.mu, cfg.mu_max);
    EXPECT_EQ(s.network.weights(), net.weights());
    EXPECT_EQ(r.f_after, r.f_before);
}

TEST(Gradient, MatchesFiniteDifferenceOfHalfObjective)
{
    std::mt19937_64 rng(21);
    const Batch b       = affine_batch(rng, 25);
    const Network net   = init_network(Topology{2, {5, 3}, 1}, 4);
    const double alpha  = 0.3, beta = 2.0, step = 1e-6;
    const Eigen::VectorXd g = half_gradient(assemble(net, b, 7), net, alpha, beta);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
        Network plus = net, minus = net;
        Eigen::VectorXd w = net.weights();
        w[k] += step;
        plus.set_weights(w);
        w[k] -= 2 * step;
        minus.set_weights(w);
        const double fd = (objective(plus, b, alpha, beta).f - objective(minus, b, alpha, beta).f) / (4 * step);
        EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "weight " << k;
    }
}

TEST(Assemble, ChunkingDoesNotChangeNormalEquations)
{
    std::mt19937_64 rng(8);
    const Batch b         = affine_batch(rng, 100);
    const Network net     = init_network(Topology{2, {5}, 1}, 3);
    const NormalEquations a = assemble(net, b, 512);
    const NormalEquations c = assemble(net, b, 7);
    EXPECT_LT((a.jtj - c.jtj).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((a.jtr - c.jtr).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(a.e_d, c.e_d, 1e-12);
    EXPECT_EQ(a.jtj, a.jtj.transpose());
}

TEST(EffectiveParameters, ZeroAlphaGivesAllWeights)
{
    Eigen::MatrixXd jtj = Eigen::MatrixXd::Identity(5, 5);
    EXPECT_EQ(effective_parameters(jtj, 0.0, 1.0), 5.0);
}

TEST(EffectiveParameters, TwoByTwoExplicitInverse)
{
    Eigen::Matrix2d jtj;
    jtj << 2.0, 1.0, 1.0, 3.0;
    const double alpha = 0.5, beta = 2.0;
    // A = [[4.5, 2], [2, 6.5]], tr(A^-1) = (4.5 + 6.5) / (4.5 * 6.5 - 4)
    const double expected = 2.0 - alpha * 11.0 / 25.25;
    EXPECT_NEAR(effective_parameters(jtj, alpha, beta), expected, 1e-14);
}

TEST(EffectiveParameters, AlwaysWithinZeroAndWeightCount)
{
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> logu(-6.0, 6.0);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::MatrixXd j(12, 6);
        for (Eigen::Index r = 0; r < j.rows(); ++r)
            for (Eigen::Index c = 0; c < j.cols(); ++c) j(r, c) = u(rng);
        const double g = effective_parameters(j.transpose() * j, std::pow(10.0, logu(rng)), std::pow(10.0, logu(rng)));
        EXPECT_GE(g, 0.0);
        EXPECT_LE(g, 6.0);
    }
}

TEST(UpdateHyperparameters, FormulasAndEdgeCases)
{
    TrainState s = state_for(Network(Topology{1, {}, 1}), 0.5, 2.0, 1e-3);
    Eigen::Matrix2d jtj;
    jtj << 2.0, 1.0, 1.0, 3.0;
    const double gamma = 2.0 - 0.5 * 11.0 / 25.25;
    update_hyperparameters(s, jtj, 4.0, 8.0, 10);
    EXPECT_NEAR(s.gamma, gamma, 1e-14);
    EXPECT_NEAR(s.alpha, gamma / 16.0, 1e-14);
    EXPECT_NEAR(s.beta, (10.0 - gamma) / 8.0, 1e-14);

    TrainState z = state_for(Network(Topology{1, {}, 1}), 0.5, 2.0, 1e-3);
    EXPECT_TRUE(update_hyperparameters(z, jtj, 0.0, 8.0, 10).exact_fit);
    EXPECT_EQ(z.beta, 2.0);
    EXPECT_THROW(update_hyperparameters(z, jtj, 1.0, 0.0, 10), ArgumentError);
}

TEST(Train, LearnsSineWithinThreeHundredEpochs)
{
    TrainConfig cfg;
    cfg.max_epochs      = 300;
    cfg.goal            = 1e-4;
    cfg.seed            = 1;
    const TrainResult r = train(init_network(Topology{1, {8}, 1}, 1), sine_dataset(), cfg);
    EXPECT_EQ(r.stop, StopReason::goal);
    EXPECT_LT(r.history().back().train_mse, 1e-4);
    EXPECT_LE(r.history().back().epoch, 300u);
}

TEST(Train, HistoryInvariants)
{
    TrainConfig cfg;
    cfg.max_epochs      = 60;
    cfg.goal            = 0.0;
    const TrainResult r = train(init_network(Topology{1, {8}, 1}, 2), sine_dataset(), cfg);
    const double n_w    = static_cast<double>(r.network.parameter_count());
    ASSERT_GE(r.history().size(), 2u);
    for (std::size_t k = 1; k < r.history().size(); ++k) {
        const EpochRecord &e = r.history()[k];
        EXPECT_EQ(e.epoch, k);
        EXPECT_LT(e.step_f_after, e.step_f_before) << "epoch " << k;
        EXPECT_GE(e.gamma, 0.0);
        EXPECT_LE(e.gamma, n_w);
        EXPECT_GT(e.beta, 0.0);
        EXPECT_GE(e.alpha, 0.0);
    }
    double best = r.history()[0].val_mse;
    for (const auto &e : r.history()) best = std::min(best, e.val_mse);
    EXPECT_EQ(r.best_val_mse, best);
    EXPECT_EQ(r.history()[r.best_epoch].val_mse, best);
    EXPECT_EQ(forward_batch(r.network, sine_dataset().inputs).rows(), 200);
}

TEST(Train, ZeroEpochsReturnsInitialNetwork)
{
    TrainConfig cfg;
    cfg.max_epochs        = 0;
    const Network initial = init_network(Topology{1, {8}, 1}, 3);
    const TrainResult r   = train(initial, sine_dataset(), cfg);
    EXPECT_EQ(r.history().size(), 1u);
    EXPECT_EQ(r.network, initial);
    EXPECT_EQ(r.stop, StopReason::max_epochs);
}

TEST(Train, UnreachableGoalOfInfinityStopsImmediately)
{
    TrainConfig cfg;
    cfg.goal            = std::numeric_limits<double>::infinity();
    const TrainResult r = train(init_network(Topology{1, {8}, 1}, 3), sine_dataset(), cfg);
    EXPECT_EQ(r.history().size(), 1u);
    EXPECT_EQ(r.stop, StopReason::goal);
}

TEST(Train, Deterministic)
{
    TrainConfig cfg;
    cfg.max_epochs     = 40;
    cfg.batch_rows     = 60;
    cfg.seed           = 11;
    const TrainResult a = train(init_network(Topology{1, {8}, 1}, 11), sine_dataset(), cfg);
    const TrainResult b = train(init_network(Topology{1, {8}, 1}, 11), sine_dataset(), cfg);
    EXPECT_EQ(a.network, b.network);
    EXPECT_EQ(history_to_csv(a.history()), history_to_csv(b.history()));
}

TEST(Train, BatchRowsCapsAssembledRows)
{
    TrainConfig cfg;
    cfg.max_epochs      = 10;
    cfg.goal            = 0.0;
    cfg.batch_rows      = 30;
    cfg.chunk_rows      = 8;
    const TrainResult r = train(init_network(Topology{1, {8}, 1}, 5), sine_dataset(), cfg);
    EXPECT_EQ(r.peak_rows_assembled, 30u);
    cfg.batch_rows       = std::nullopt;
    const TrainResult f  = train(init_network(Topology{1, {8}, 1}, 5), sine_dataset(), cfg);
    EXPECT_EQ(f.peak_rows_assembled, 100u);
}

TEST(Train, RejectsMismatchedTopology)
{
    EXPECT_THROW(train(init_network(Topology{2, {3}, 1}, 1), sine_dataset(), TrainConfig{}), ArgumentError);
    TrainConfig bad;
    bad.batch_rows = 0;
    EXPECT_THROW(train(init_network(Topology{1, {3}, 1}, 1), sine_dataset(), bad), ArgumentError);
}

TEST(HistoryCsv, HeaderAndRowCount)
{
    TrainConfig cfg;
    cfg.max_epochs      = 3;
    cfg.goal            = 0.0;
    const TrainResult r = train(init_network(Topology{1, {4}, 1}, 5), sine_dataset(), cfg);
    const std::string csv = history_to_csv(r.history());
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,e_d,e_w,f,alpha,beta,gamma,mu,val_mse");
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.history().size() + 1);
}

TEST(Sweep, SingleCellMatchesDirectTraining)
{
    TrainConfig cfg;
    cfg.max_epochs   = 30;
    cfg.seed         = 4;
    const Topology t{1, {4}, 1};
    const auto cells    = sweep(sine_dataset(), {t}, cfg);
    const TrainResult r = train(init_network(t, 4), sine_dataset(), cfg);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_TRUE(cells[0].ok);
    EXPECT_EQ(cells[0].val_mse, r.best_val_mse);
    EXPECT_EQ(cells[0].best_epoch, r.best_epoch);
}

TEST(Sweep, RankingIndependentOfGridOrder)
{
    TrainConfig cfg;
    cfg.max_epochs = 30;
    const std::vector<Topology> grid{Topology{1, {2}, 1}, Topology{1, {8}, 1}, Topology{1, {4, 3}, 1}};
    const std::vector<Topology> perm{grid[2], grid[0], grid[1]};
    const auto a = sweep(sine_dataset(), grid, cfg);
    const auto b = sweep(sine_dataset(), perm, cfg);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].topology, b[k].topology);
        EXPECT_EQ(a[k].val_mse, b[k].val_mse);
        if (k > 0) {
            EXPECT_LE(a[k - 1].val_mse, a[k].val_mse);
        }
    }
}

TEST(Sweep, FailingCellIsIsolatedAndRankedLast)
{
    TrainConfig cfg;
    cfg.max_epochs = 5;
    const auto cells = sweep(sine_dataset(), {Topology{3, {4}, 1}, Topology{1, {4}, 1}}, cfg);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_TRUE(cells[0].ok);
    EXPECT_FALSE(cells[1].ok);
    EXPECT_FALSE(cells[1].error.empty());
    EXPECT_NE(sweep_to_csv(cells).find("failed"), std::string::npos);
    EXPECT_THROW(sweep(sine_dataset(), {}, cfg), ArgumentError);
}

TEST(Sweep, DeeperNetworkWinsOnSineFixture)
{
    TrainConfig cfg;
    cfg.max_epochs = 100;
    cfg.seed       = 1;
    const auto cells = sweep(sine_dataset(), {Topology{1, {1}, 1}, Topology{1, {12, 8}, 1}}, cfg);
    ASSERT_TRUE(cells[0].ok && cells[1].ok);
    EXPECT_EQ(cells[0].topology.hidden_sizes, (std::vector<std::size_t>{12, 8}));
}
