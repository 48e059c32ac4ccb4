/// @file cfnn.hpp
/// @brief Cascade-forward neural network with an analytic weight Jacobian.
///
/// Every layer (hidden layers and the output layer) receives a connection from the external
/// input and from every earlier hidden layer. Hidden units use tanh, the output layer is
/// linear.
///
/// Flattened weight ordering ("cascade-v1"): layers in order (hidden_1 ... hidden_H, output);
/// within a layer one block per source in order (input, hidden_1, ..., hidden_{L-1}), each
/// block row-major with rows = layer size and cols = source size; the layer's bias vector
/// follows its last block.

#pragma once

#include "motorsense/dataset.hpp"
#include "motorsense/errors.hpp"
#include "motorsense/key_value.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace motorsense
{

inline constexpr const char *weight_ordering_tag = "cascade-v1";

struct Topology {
    std::size_t n_inputs = 2;
    std::vector<std::size_t> hidden_sizes{12, 8};
    std::size_t n_outputs = 3;

    std::size_t layer_count() const noexcept { return hidden_sizes.size() + 1; }

    /// Units in computational layer `layer` (the last one is the output layer).
    std::size_t layer_size(std::size_t layer) const
    {
        return layer < hidden_sizes.size() ? hidden_sizes[layer] : n_outputs;
    }

    /// Width of source `s`: 0 is the external input, s >= 1 is hidden layer s - 1.
    std::size_t source_size(std::size_t s) const { return s == 0 ? n_inputs : hidden_sizes[s - 1]; }

    std::size_t parameter_count() const
    {
        std::size_t total = 0;
        for (std::size_t layer = 0; layer < layer_count(); ++layer) {
            std::size_t fan_in = 1;
            for (std::size_t s = 0; s <= layer; ++s) {
                fan_in += source_size(s);
            }
            total += layer_size(layer) * fan_in;
        }
        return total;
    }

    bool operator==(const Topology &) const = default;
};

inline void validate(const Topology &t)
{
    if (t.n_inputs < 1 || t.n_outputs < 1) {
        throw ArgumentError("Topology: need at least one input and one output");
    }
    for (std::size_t h : t.hidden_sizes) {
        if (h < 1) {
            throw ArgumentError("Topology: hidden layer sizes must be >= 1");
        }
    }
}

/// Comma separated hidden sizes; "" or "-" means no hidden layer.
inline std::string hidden_to_string(const std::vector<std::size_t> &hidden)
{
    if (hidden.empty()) {
        return "-";
    }
    std::string out;
    for (std::size_t k = 0; k < hidden.size(); ++k) {
        out += (k ? "," : "") + std::to_string(hidden[k]);
    }
    return out;
}

inline std::vector<std::size_t> hidden_from_string(const std::string &text)
{
    std::vector<std::size_t> hidden;
    const std::string t = trim(text);
    if (t.empty() || t == "-") {
        return hidden;
    }
    for (const auto &field : split_csv_line(t)) {
        try {
            std::size_t used = 0;
            const long value = std::stol(field, &used);
            if (used != field.size() || value < 1) {
                throw std::invalid_argument(field);
            }
            hidden.push_back(static_cast<std::size_t>(value));
        } catch (const std::logic_error &) {
            throw ArgumentError("invalid hidden layer size '" + field + "'");
        }
    }
    return hidden;
}

class Network
{
public:
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    explicit Network(Topology topology)
        : topology_(std::move(topology))
    {
        validate(topology_);
        std::size_t offset = 0;
        block_offset_.resize(topology_.layer_count());
        bias_offset_.resize(topology_.layer_count());
        for (std::size_t layer = 0; layer < topology_.layer_count(); ++layer) {
            for (std::size_t s = 0; s <= layer; ++s) {
                block_offset_[layer].push_back(offset);
                offset += topology_.layer_size(layer) * topology_.source_size(s);
            }
            bias_offset_[layer] = offset;
            offset += topology_.layer_size(layer);
        }
        weights_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
    }

    const Topology &topology() const noexcept { return topology_; }
    std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(weights_.size()); }

    const Eigen::VectorXd &weights() const noexcept { return weights_; }

    void set_weights(const Eigen::VectorXd &w)
    {
        if (w.size() != weights_.size()) {
            throw ArgumentError("Network::set_weights: expected " + std::to_string(weights_.size()) +
                                " weights, got " + std::to_string(w.size()));
        }
        weights_ = w;
    }

    std::size_t block_offset(std::size_t layer, std::size_t source) const
    {
        return block_offset_.at(layer).at(source);
    }
    std::size_t bias_offset(std::size_t layer) const { return bias_offset_.at(layer); }

    Eigen::Map<const RowMajor> block(std::size_t layer, std::size_t source) const
    {
        return {weights_.data() + block_offset(layer, source),
                static_cast<Eigen::Index>(topology_.layer_size(layer)),
                static_cast<Eigen::Index>(topology_.source_size(source))};
    }
    Eigen::Map<RowMajor> block(std::size_t layer, std::size_t source)
    {
        return {weights_.data() + block_offset(layer, source),
                static_cast<Eigen::Index>(topology_.layer_size(layer)),
                static_cast<Eigen::Index>(topology_.source_size(source))};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const
    {
        return {weights_.data() + bias_offset(layer), static_cast<Eigen::Index>(topology_.layer_size(layer))};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t layer)
    {
        return {weights_.data() + bias_offset(layer), static_cast<Eigen::Index>(topology_.layer_size(layer))};
    }

    bool operator==(const Network &other) const
    {
        return topology_ == other.topology_ && weights_ == other.weights_;
    }

private:
    Topology topology_;
    std::vector<std::vector<std::size_t>> block_offset_;
    std::vector<std::size_t> bias_offset_;
    Eigen::VectorXd weights_;
};

/// Block weights uniform on [-0.5, 0.5] in flattened order, biases zero.
inline Network init_network(const Topology &topology, std::uint64_t seed)
{
    Network net(topology);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-0.5, 0.5);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    for (std::size_t layer = 0; layer < topology.layer_count(); ++layer) {
        for (std::size_t s = 0; s <= layer; ++s) {
            const std::size_t begin = net.block_offset(layer, s);
            const std::size_t end   = begin + topology.layer_size(layer) * topology.source_size(s);
            for (std::size_t k = begin; k < end; ++k) {
                w[static_cast<Eigen::Index>(k)] = uniform(rng);
            }
        }
    }
    net.set_weights(w);
    return net;
}

/// Per-evaluation scratch: activations of every hidden layer and backprop accumulators.
struct Workspace {
    std::vector<Eigen::VectorXd> hidden;
    std::vector<Eigen::VectorXd> upstream;
    Eigen::VectorXd output;
};

namespace detail
{

inline Eigen::Ref<const Eigen::VectorXd> source_activation(const Workspace &ws,
                                                           const Eigen::Ref<const Eigen::VectorXd> &x,
                                                           std::size_t s)
{
    return s == 0 ? x : Eigen::Ref<const Eigen::VectorXd>(ws.hidden[s - 1]);
}

inline void forward_into(const Network &net, const Eigen::Ref<const Eigen::VectorXd> &x, Workspace &ws)
{
    const Topology &topo = net.topology();
    if (static_cast<std::size_t>(x.size()) != topo.n_inputs) {
        throw ArgumentError("forward: expected " + std::to_string(topo.n_inputs) + " inputs, got " +
                            std::to_string(x.size()));
    }
    const std::size_t n_hidden = topo.hidden_sizes.size();
    ws.hidden.resize(n_hidden);
    for (std::size_t layer = 0; layer <= n_hidden; ++layer) {
        Eigen::VectorXd z = net.bias(layer);
        for (std::size_t s = 0; s <= layer; ++s) {
            z.noalias() += net.block(layer, s) * source_activation(ws, x, s);
        }
        if (layer < n_hidden) {
            ws.hidden[layer] = z.array().tanh().matrix();
        } else {
            ws.output = std::move(z);
        }
    }
}

} // namespace detail

inline Eigen::VectorXd forward(const Network &net, const Eigen::Ref<const Eigen::VectorXd> &x)
{
    Workspace ws;
    detail::forward_into(net, x, ws);
    return ws.output;
}

/// Hidden activations of the last forward pass through `ws` are left in place.
inline Eigen::VectorXd forward(const Network &net, const Eigen::Ref<const Eigen::VectorXd> &x, Workspace &ws)
{
    detail::forward_into(net, x, ws);
    return ws.output;
}

inline Eigen::MatrixXd forward_batch(const Network &net, const Eigen::MatrixXd &inputs)
{
    if (static_cast<std::size_t>(inputs.cols()) != net.topology().n_inputs) {
        throw ArgumentError("forward_batch: input column count mismatch");
    }
    Eigen::MatrixXd out(inputs.rows(), static_cast<Eigen::Index>(net.topology().n_outputs));
    Workspace ws;
    Eigen::VectorXd x(inputs.cols());
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        x = inputs.row(r).transpose();
        detail::forward_into(net, x, ws);
        out.row(r) = ws.output.transpose();
    }
    return out;
}

/// Writes d output / d weights (n_outputs x N_w) into `jac` by reverse accumulation and
/// returns the network output. `jac` must already have the right shape.
inline Eigen::VectorXd jacobian_into(const Network &net, const Eigen::Ref<const Eigen::VectorXd> &x,
                                     Eigen::Ref<Eigen::MatrixXd> jac, Workspace &ws)
{
    const Topology &topo = net.topology();
    if (jac.rows() != static_cast<Eigen::Index>(topo.n_outputs) ||
        jac.cols() != static_cast<Eigen::Index>(net.parameter_count())) {
        throw ArgumentError("jacobian: output matrix has the wrong shape");
    }
    detail::forward_into(net, x, ws);
    const std::size_t n_hidden = topo.hidden_sizes.size();
    ws.upstream.resize(n_hidden);

    for (std::size_t k = 0; k < topo.n_outputs; ++k) {
        for (std::size_t l = 0; l < n_hidden; ++l) {
            ws.upstream[l] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(topo.hidden_sizes[l]));
        }
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(topo.n_outputs));
        delta[static_cast<Eigen::Index>(k)] = 1.0;

        for (std::size_t layer = n_hidden + 1; layer-- > 0;) {
            if (layer < n_hidden) {
                delta = ws.upstream[layer].array() * (1.0 - ws.hidden[layer].array().square());
            }
            const auto rows = delta.size();
            for (std::size_t s = 0; s <= layer; ++s) {
                const auto a        = detail::source_activation(ws, x, s);
                const std::size_t o = net.block_offset(layer, s);
                for (Eigen::Index r = 0; r < rows; ++r) {
                    jac.row(static_cast<Eigen::Index>(k))
                        .segment(static_cast<Eigen::Index>(o) + r * a.size(), a.size()) =
                        delta[r] * a.transpose();
                }
                if (s >= 1) {
                    ws.upstream[s - 1].noalias() += net.block(layer, s).transpose() * delta;
                }
            }
            jac.row(static_cast<Eigen::Index>(k)).segment(static_cast<Eigen::Index>(net.bias_offset(layer)), rows) =
                delta.transpose();
        }
    }
    return ws.output;
}

inline Eigen::MatrixXd jacobian(const Network &net, const Eigen::Ref<const Eigen::VectorXd> &x)
{
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(net.topology().n_outputs),
                        static_cast<Eigen::Index>(net.parameter_count()));
    Workspace ws;
    jacobian_into(net, x, jac, ws);
    return jac;
}

/// A trained network together with the scalers that make it a complete virtual sensor:
/// raw (v, i) in, raw (omega, theta, R) out.
struct Model {
    Network network;
    ChannelScaler input_scaler;
    ChannelScaler target_scaler;

    Eigen::MatrixXd predict_raw(const Eigen::MatrixXd &raw_inputs) const
    {
        return invert(target_scaler, forward_batch(network, apply(input_scaler, raw_inputs)));
    }
};

inline std::string to_text(const Model &m)
{
    const Topology &t = m.network.topology();
    std::string out   = "motorsense-model 1\n";
    out += std::string("ordering ") + weight_ordering_tag + "\n";
    out += "topology " + std::to_string(t.n_inputs) + " " + hidden_to_string(t.hidden_sizes) + " " +
           std::to_string(t.n_outputs) + "\n";
    auto scaler = [&out](const char *kind, const ChannelScaler &sc) {
        out += std::string(kind) + " " + std::to_string(sc.channels());
        for (std::size_t c = 0; c < sc.channels(); ++c) {
            out += " " + format_double(sc.min[c]) + " " + format_double(sc.max[c]);
        }
        out += "\n";
    };
    scaler("input_scaler", m.input_scaler);
    scaler("target_scaler", m.target_scaler);
    out += "weights " + std::to_string(m.network.parameter_count()) + "\n";
    for (Eigen::Index k = 0; k < m.network.weights().size(); ++k) {
        out += format_double(m.network.weights()[k]) + "\n";
    }
    return out;
}

inline Model model_from_text(const std::string &text)
{
    std::istringstream in(text);
    auto expect = [&in](const std::string &keyword) {
        std::string word;
        if (!(in >> word) || word != keyword) {
            throw IoError("model file: expected '" + keyword + "'");
        }
    };
    auto next = [&in](const char *what) {
        std::string word;
        if (!(in >> word)) {
            throw IoError(std::string("model file: missing ") + what);
        }
        return word;
    };
    expect("motorsense-model");
    if (next("version") != "1") {
        throw IoError("model file: unsupported version");
    }
    expect("ordering");
    if (next("ordering tag") != weight_ordering_tag) {
        throw IoError("model file: unsupported weight ordering");
    }
    expect("topology");
    Topology topo;
    try {
        topo.n_inputs     = std::stoul(next("n_inputs"));
        topo.hidden_sizes = hidden_from_string(next("hidden sizes"));
        topo.n_outputs    = std::stoul(next("n_outputs"));
    } catch (const std::logic_error &) {
        throw IoError("model file: malformed topology line");
    }
    auto scaler = [&](const char *kind, std::size_t expected) {
        expect(kind);
        ChannelScaler sc;
        const std::size_t n = std::stoul(next("channel count"));
        if (n != expected) {
            throw IoError(std::string("model file: ") + kind + " channel count mismatch");
        }
        for (std::size_t c = 0; c < n; ++c) {
            sc.min.push_back(parse_double(next("scaler min"), kind));
            sc.max.push_back(parse_double(next("scaler max"), kind));
        }
        return sc;
    };
    Model m{Network(topo), scaler("input_scaler", topo.n_inputs), scaler("target_scaler", topo.n_outputs)};
    expect("weights");
    const std::size_t n = std::stoul(next("weight count"));
    if (n != m.network.parameter_count()) {
        throw IoError("model file: weight count does not match topology");
    }
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        w[static_cast<Eigen::Index>(k)] = parse_double(next("weight"), "weight");
    }
    m.network.set_weights(w);
    return m;
}

} // namespace motorsense
