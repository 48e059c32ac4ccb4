/// @file trainer.hpp
/// @brief Levenberg-Marquardt training with Bayesian regularization.
///
/// Minimizes F = beta * E_D + alpha * E_W where E_D is the sum of squared residuals on the
/// scaled targets and E_W the sum of squared weights. After every accepted LM step the
/// evidence framework re-estimates the hyperparameters from the Gauss-Newton Hessian
/// H = 2 beta J'J + 2 alpha I:
///
///     gamma = N_w - 2 alpha tr(H^-1)
///     alpha = gamma / (2 E_W)
///     beta  = (N - gamma) / (2 E_D)
///
/// with N the number of residuals (rows x outputs).

#pragma once

#include "motorsense/cfnn.hpp"
#include "motorsense/dataset.hpp"
#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace motorsense
{

struct TrainConfig {
    std::size_t max_epochs = 2000;
    double goal            = 1.6e-4; ///< scaled train MSE, E_D / (rows * outputs)
    double mu_init         = 1e-3;
    double mu_increase     = 10.0;
    double mu_decrease     = 10.0; ///< mu is divided by this after an accepted step
    double mu_max          = 1e10;
    double min_gradient    = 1e-10; ///< on |grad F|
    std::uint64_t seed     = 0;
    /// Training rows used per epoch; larger train partitions are subsampled each epoch.
    std::optional<std::size_t> batch_rows = 20000;
    /// Rows per Jacobian assembly chunk.
    std::size_t chunk_rows = 512;
};

inline void validate(const TrainConfig &c)
{
    if (!(c.mu_init > 0) || !(c.mu_max > 0) || !(c.mu_increase > 1) || !(c.mu_decrease > 1)) {
        throw ArgumentError("TrainConfig: damping parameters must be positive with increase/decrease > 1");
    }
    if (c.batch_rows && *c.batch_rows == 0) {
        throw ArgumentError("TrainConfig: batch_rows must be > 0");
    }
    if (c.chunk_rows == 0) {
        throw ArgumentError("TrainConfig: chunk_rows must be > 0");
    }
}

struct EpochRecord {
    std::size_t epoch = 0;
    double e_d        = 0.0;
    double e_w        = 0.0;
    double f          = 0.0; ///< beta * e_d + alpha * e_w with this record's hyperparameters
    double alpha      = 0.0;
    double beta       = 1.0;
    double gamma      = 0.0;
    double mu         = 0.0;
    double val_mse    = 0.0;
    double train_mse  = 0.0;
    /// F before and after this epoch's LM step, both at the hyperparameters the step used.
    double step_f_before = 0.0;
    double step_f_after  = 0.0;
    std::size_t rows_assembled = 0;
};

struct TrainState {
    Network network;
    double alpha = 0.0;
    double beta  = 1.0;
    double gamma = 0.0;
    double mu    = 1e-3;
    std::vector<EpochRecord> history;
};

/// Rows of a data set used for one objective evaluation.
struct Batch {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    std::size_t residual_count() const noexcept
    {
        return static_cast<std::size_t>(targets.rows() * targets.cols());
    }
};

inline Batch select_rows(const DataSet &ds, const std::vector<Eigen::Index> &rows)
{
    Batch b;
    b.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.inputs.cols());
    b.targets.resize(static_cast<Eigen::Index>(rows.size()), ds.targets.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        b.inputs.row(static_cast<Eigen::Index>(k))  = ds.inputs.row(rows[k]);
        b.targets.row(static_cast<Eigen::Index>(k)) = ds.targets.row(rows[k]);
    }
    return b;
}

struct Objective {
    double e_d = 0.0;
    double e_w = 0.0;
    double f   = 0.0;
};

inline double sum_squared_error(const Network &net, const Batch &batch)
{
    return (forward_batch(net, batch.inputs) - batch.targets).squaredNorm();
}

inline Objective objective(const Network &net, const Batch &batch, double alpha, double beta)
{
    if (batch.inputs.rows() == 0) {
        throw ArgumentError("objective: no training rows");
    }
    Objective o;
    o.e_d = sum_squared_error(net, batch);
    o.e_w = net.weights().squaredNorm();
    o.f   = beta * o.e_d + alpha * o.e_w;
    return o;
}

/// J'J, J'r and E_D over a batch, with r = prediction - target.
struct NormalEquations {
    Eigen::MatrixXd jtj;
    Eigen::VectorXd jtr;
    double e_d = 0.0;
    std::size_t rows = 0;
};

/// Assembles the normal equations chunk by chunk; at most `chunk_rows` rows of the
/// Jacobian exist at any time.
inline NormalEquations assemble(const Network &net, const Batch &batch, std::size_t chunk_rows)
{
    const auto n_w   = static_cast<Eigen::Index>(net.parameter_count());
    const auto n_out = static_cast<Eigen::Index>(net.topology().n_outputs);
    NormalEquations ne;
    ne.jtj  = Eigen::MatrixXd::Zero(n_w, n_w);
    ne.jtr  = Eigen::VectorXd::Zero(n_w);
    ne.rows = static_cast<std::size_t>(batch.inputs.rows());

    Workspace ws;
    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    Eigen::VectorXd x(batch.inputs.cols());
    for (Eigen::Index start = 0; start < batch.inputs.rows(); start += static_cast<Eigen::Index>(chunk_rows)) {
        const Eigen::Index rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_rows),
                                                         batch.inputs.rows() - start);
        jac.resize(rows * n_out, n_w);
        res.resize(rows * n_out);
        for (Eigen::Index r = 0; r < rows; ++r) {
            x                         = batch.inputs.row(start + r).transpose();
            const Eigen::VectorXd out = jacobian_into(net, x, jac.middleRows(r * n_out, n_out), ws);
            res.segment(r * n_out, n_out) = out - batch.targets.row(start + r).transpose();
        }
        ne.jtj.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
        ne.jtr.noalias() += jac.transpose() * res;
        ne.e_d += res.squaredNorm();
    }
    ne.jtj = ne.jtj.selfadjointView<Eigen::Lower>();
    return ne;
}

/// Half the gradient of F: beta J'r + alpha w.
inline Eigen::VectorXd half_gradient(const NormalEquations &ne, const Network &net, double alpha, double beta)
{
    return beta * ne.jtr + alpha * net.weights();
}

struct LmStepResult {
    bool accepted = false; ///< false means mu exceeded mu_max (training stalled)
    double f_before = 0.0;
    double f_after  = 0.0;
    double e_d      = 0.0; ///< at the weights held after the step
    double e_w      = 0.0;
    int trials      = 0;
};

/// One LM step: solve (beta J'J + (alpha + mu) I) dw = -(beta J'r + alpha w); accept when F
/// drops (mu /= mu_decrease), otherwise leave the weights untouched, raise mu and retry.
inline LmStepResult lm_step(TrainState &state, const Batch &batch, const NormalEquations &ne, const TrainConfig &cfg)
{
    const Eigen::VectorXd w    = state.network.weights();
    const Eigen::VectorXd rhs  = -half_gradient(ne, state.network, state.alpha, state.beta);
    LmStepResult result;
    result.e_d      = ne.e_d;
    result.e_w      = w.squaredNorm();
    result.f_before = state.beta * ne.e_d + state.alpha * result.e_w;
    result.f_after  = result.f_before;
    if (!rhs.allFinite() || !std::isfinite(result.f_before)) {
        throw NumericalError("lm_step: non-finite gradient or objective");
    }

    Network trial = state.network;
    while (state.mu <= cfg.mu_max) {
        ++result.trials;
        Eigen::MatrixXd a = state.beta * ne.jtj;
        a.diagonal().array() += state.alpha + state.mu;
        const Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            const Eigen::VectorXd dw = llt.solve(rhs);
            if (dw.allFinite()) {
                trial.set_weights(w + dw);
                const double e_d = sum_squared_error(trial, batch);
                const double e_w = trial.weights().squaredNorm();
                const double f   = state.beta * e_d + state.alpha * e_w;
                if (std::isfinite(f) && f < result.f_before) {
                    state.network = std::move(trial);
                    state.mu /= cfg.mu_decrease;
                    result.accepted = true;
                    result.f_after  = f;
                    result.e_d      = e_d;
                    result.e_w      = e_w;
                    return result;
                }
            }
        }
        state.mu *= cfg.mu_increase;
    }
    return result;
}

inline LmStepResult lm_step(TrainState &state, const Batch &batch, const TrainConfig &cfg)
{
    return lm_step(state, batch, assemble(state.network, batch, cfg.chunk_rows), cfg);
}

/// gamma = N_w - alpha tr((beta J'J + alpha I)^-1), i.e. N_w - 2 alpha tr(H^-1).
inline double effective_parameters(const Eigen::MatrixXd &jtj, double alpha, double beta)
{
    const auto n_w = static_cast<double>(jtj.rows());
    if (alpha == 0.0) {
        return n_w;
    }
    Eigen::MatrixXd a = beta * jtj;
    a.diagonal().array() += alpha;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(jtj.rows(), jtj.cols()));
    const double gamma        = n_w - alpha * inv.trace();
    if (!std::isfinite(gamma)) {
        throw NumericalError("effective_parameters: trace of inverse Hessian is not finite");
    }
    return std::clamp(gamma, 0.0, n_w);
}

struct HyperparameterUpdate {
    bool exact_fit = false; ///< E_D == 0: beta is left unchanged and training should stop
};

/// Evidence-framework re-estimate of (alpha, beta, gamma) at the current weights, using the
/// Gauss-Newton Hessian from `jtj`.
inline HyperparameterUpdate update_hyperparameters(TrainState &state, const Eigen::MatrixXd &jtj, double e_d,
                                                   double e_w, std::size_t residual_count)
{
    HyperparameterUpdate u;
    state.gamma = effective_parameters(jtj, state.alpha, state.beta);
    if (e_d == 0.0) {
        u.exact_fit = true;
        return u;
    }
    if (!(e_w > 0.0)) {
        throw ArgumentError("update_hyperparameters: E_W must be > 0");
    }
    state.alpha = state.gamma / (2.0 * e_w);
    // At least one residual's worth of data precision, so beta stays positive when N <= gamma.
    state.beta = std::max(static_cast<double>(residual_count) - state.gamma, 1.0) / (2.0 * e_d);
    if (!std::isfinite(state.alpha) || !std::isfinite(state.beta)) {
        throw NumericalError("update_hyperparameters: non-finite alpha or beta");
    }
    return u;
}

enum class StopReason { goal, max_epochs, min_gradient, mu_max, exact_fit };

inline const char *to_string(StopReason r)
{
    switch (r) {
    case StopReason::goal: return "goal";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::min_gradient: return "min_gradient";
    case StopReason::mu_max: return "mu_max";
    case StopReason::exact_fit: return "exact_fit";
    }
    return "?";
}

struct TrainResult {
    Network network;      ///< best on validation
    std::size_t best_epoch = 0;
    double best_val_mse    = 0.0;
    TrainState final_state;
    StopReason stop = StopReason::max_epochs;
    std::size_t peak_rows_assembled = 0;

    const std::vector<EpochRecord> &history() const noexcept { return final_state.history; }
};

namespace detail
{

inline std::vector<Eigen::Index> epoch_rows(const std::vector<Eigen::Index> &train, const TrainConfig &cfg,
                                            std::size_t epoch)
{
    if (!cfg.batch_rows || train.size() <= *cfg.batch_rows) {
        return train;
    }
    std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
    std::vector<Eigen::Index> picked;
    picked.reserve(*cfg.batch_rows);
    std::sample(train.begin(), train.end(), std::back_inserter(picked), *cfg.batch_rows, rng);
    return picked;
}

inline double mse(const Network &net, const Batch &batch)
{
    return batch.inputs.rows() == 0 ? 0.0
                                    : sum_squared_error(net, batch) / static_cast<double>(batch.residual_count());
}

} // namespace detail

/// Bayesian-regularized LM training. Starts from alpha = 0, beta = 1, mu = mu_init and
/// returns the network with the lowest validation MSE seen (epoch 0 included).
inline TrainResult train(const Network &initial, const DataSet &dataset, const TrainConfig &cfg)
{
    validate(cfg);
    const std::vector<Eigen::Index> train_rows = dataset.rows_of(Split::train);
    if (train_rows.empty()) {
        throw ArgumentError("train: dataset has no training rows");
    }
    if (static_cast<std::size_t>(dataset.inputs.cols()) != initial.topology().n_inputs ||
        static_cast<std::size_t>(dataset.targets.cols()) != initial.topology().n_outputs) {
        throw ArgumentError("train: network topology does not match dataset channels");
    }
    const Batch full_train = select_rows(dataset, train_rows);
    const Batch validation = select_rows(dataset, dataset.rows_of(Split::validation));
    const bool has_val     = validation.inputs.rows() > 0;

    TrainResult result{initial, 0, 0.0, TrainState{initial, 0.0, 1.0, 0.0, cfg.mu_init, {}}, StopReason::max_epochs, 0};
    TrainState &state = result.final_state;
    state.alpha       = 0.0;
    state.beta        = 1.0;
    state.gamma       = static_cast<double>(initial.parameter_count());
    state.mu          = cfg.mu_init;

    {
        EpochRecord r;
        const Objective o = objective(state.network, full_train, state.alpha, state.beta);
        r.e_d = o.e_d;
        r.e_w = o.e_w;
        r.f   = o.f;
        r.alpha = state.alpha;
        r.beta  = state.beta;
        r.gamma = state.gamma;
        r.mu    = state.mu;
        r.train_mse     = o.e_d / static_cast<double>(full_train.residual_count());
        r.val_mse       = has_val ? detail::mse(state.network, validation) : r.train_mse;
        r.step_f_before = r.step_f_after = o.f;
        state.history.push_back(r);
        result.best_val_mse = r.val_mse;
        if (r.train_mse <= cfg.goal) {
            result.stop = StopReason::goal;
            return result;
        }
    }

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::vector<Eigen::Index> rows = detail::epoch_rows(train_rows, cfg, epoch);
        const Batch sub                      = rows.size() == train_rows.size() ? Batch{} : select_rows(dataset, rows);
        const Batch &batch                   = rows.size() == train_rows.size() ? full_train : sub;

        const NormalEquations ne = assemble(state.network, batch, cfg.chunk_rows);
        result.peak_rows_assembled = std::max(result.peak_rows_assembled, ne.rows);
        const double grad_norm = 2.0 * half_gradient(ne, state.network, state.alpha, state.beta).norm();
        if (grad_norm < cfg.min_gradient) {
            result.stop = StopReason::min_gradient;
            break;
        }

        const LmStepResult step = lm_step(state, batch, ne, cfg);
        if (!step.accepted) {
            result.stop = StopReason::mu_max;
            break;
        }
        const HyperparameterUpdate hu =
            update_hyperparameters(state, ne.jtj, step.e_d, step.e_w, batch.residual_count());

        EpochRecord r;
        r.epoch         = epoch;
        r.e_d           = step.e_d;
        r.e_w           = step.e_w;
        r.alpha         = state.alpha;
        r.beta          = state.beta;
        r.gamma         = state.gamma;
        r.f             = state.beta * r.e_d + state.alpha * r.e_w;
        r.mu            = state.mu;
        r.train_mse     = step.e_d / static_cast<double>(batch.residual_count());
        r.val_mse       = has_val ? detail::mse(state.network, validation) : r.train_mse;
        r.step_f_before = step.f_before;
        r.step_f_after  = step.f_after;
        r.rows_assembled = ne.rows;
        state.history.push_back(r);

        if (r.val_mse < result.best_val_mse) {
            result.best_val_mse = r.val_mse;
            result.best_epoch   = epoch;
            result.network      = state.network;
        }
        if (hu.exact_fit) {
            result.stop = StopReason::exact_fit;
            break;
        }
        if (r.train_mse <= cfg.goal) {
            result.stop = StopReason::goal;
            break;
        }
    }
    return result;
}

inline constexpr const char *history_csv_header = "epoch,e_d,e_w,f,alpha,beta,gamma,mu,val_mse";

inline std::string history_to_csv(const std::vector<EpochRecord> &history)
{
    std::string out = history_csv_header;
    out += '\n';
    for (const auto &r : history) {
        out += std::to_string(r.epoch);
        for (double v : {r.e_d, r.e_w, r.f, r.alpha, r.beta, r.gamma, r.mu, r.val_mse}) {
            out += ',' + format_double(v);
        }
        out += '\n';
    }
    return out;
}

struct SweepCell {
    Topology topology;
    bool ok = false;
    std::string error;
    double val_mse   = std::numeric_limits<double>::infinity();
    double train_mse = std::numeric_limits<double>::infinity(); ///< last epoch
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    StopReason stop = StopReason::max_epochs;
};

/// Trains every topology from the same seed and ranks by best validation MSE; cells that
/// fail are kept (with their error) after all successful ones.
inline std::vector<SweepCell> sweep(const DataSet &dataset, const std::vector<Topology> &grid, const TrainConfig &cfg)
{
    if (grid.empty()) {
        throw ArgumentError("sweep: empty topology grid");
    }
    std::vector<SweepCell> cells;
    for (const Topology &topo : grid) {
        SweepCell cell;
        cell.topology = topo;
        try {
            const TrainResult r = train(init_network(topo, cfg.seed), dataset, cfg);
            cell.ok         = true;
            cell.val_mse    = r.best_val_mse;
            cell.train_mse  = r.history().back().train_mse;
            cell.epochs     = r.history().back().epoch;
            cell.best_epoch = r.best_epoch;
            cell.stop       = r.stop;
        } catch (const std::exception &e) {
            cell.error = e.what();
        }
        cells.push_back(std::move(cell));
    }
    std::stable_sort(cells.begin(), cells.end(), [](const SweepCell &a, const SweepCell &b) {
        if (a.ok != b.ok) {
            return a.ok;
        }
        return a.val_mse < b.val_mse;
    });
    return cells;
}

inline std::string sweep_to_csv(const std::vector<SweepCell> &cells)
{
    std::string out = "rank,hidden,parameters,val_mse,train_mse,epochs,best_epoch,stop,error\n";
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const SweepCell &c = cells[k];
        out += std::to_string(k + 1) + ",\"" + hidden_to_string(c.topology.hidden_sizes) + "\"," +
               std::to_string(c.topology.parameter_count()) + "," + format_double(c.val_mse) + "," +
               format_double(c.train_mse) + "," + std::to_string(c.epochs) + "," + std::to_string(c.best_epoch) +
               "," + (c.ok ? to_string(c.stop) : "failed") + "," + c.error + "\n";
    }
    return out;
}

} // namespace motorsense
