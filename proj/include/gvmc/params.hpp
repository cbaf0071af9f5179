// Wave-function architectures and their flat parameter storage.
//
// A ParameterSet is one contiguous double vector plus a named segment table,
// so optimizers treat parameters as a single vector while the network code
// maps segments as matrices. Layouts depend only on the architecture and the
// code width (plus the site count for the ResNet input layer), never on the
// cluster size for the graph variants.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gvmc/common.hpp"

namespace gvmc {

enum class Variant { GNN, GNN2, ResNet };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::GNN: return "gnn";
        case Variant::GNN2: return "gnn2";
        case Variant::ResNet: return "resnet";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "gnn") return Variant::GNN;
    if (s == "gnn2") return Variant::GNN2;
    if (s == "resnet") return Variant::ResNet;
    throw ConfigError("unknown ansatz variant: " + s);
}

struct ArchConfig {
    Variant variant = Variant::GNN;
    int embed_dim = 64;
    int hidden_width = 128;
    int hidden_layers = 3;   // hidden layers per MLP, ReLU
    int mp_steps = 6;        // message-passing steps; residual blocks for ResNet
    bool coupling_edge_feature = false;  // feed J as the static edge input
    std::uint64_t seed = 1;  // weight initialization seed

    bool operator==(const ArchConfig&) const = default;
};

// The small architecture used for ablations and desk-scale training.
inline ArchConfig small_arch(Variant v = Variant::GNN) {
    ArchConfig a;
    a.variant = v;
    a.embed_dim = 16;
    a.hidden_width = 16;
    a.mp_steps = 2;
    return a;
}

struct Segment {
    std::string name;
    int rows = 0, cols = 0;
    std::size_t offset = 0;

    std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
};

class ParameterSet {
  public:
    void add(const std::string& name, int rows, int cols) {
        for (const auto& s : segments_)
            check(s.name != name, "duplicate parameter segment: " + name);
        segments_.push_back({name, rows, cols, data_.size()});
        data_.resize(data_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
    }

    std::size_t total_count() const { return data_.size(); }
    const std::vector<Segment>& segments() const { return segments_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    const Segment& segment(const std::string& name) const {
        for (const auto& s : segments_)
            if (s.name == name) return s;
        throw ShapeMismatch("no parameter segment named " + name);
    }

    Eigen::Map<Eigen::MatrixXd> matrix(const Segment& s) {
        return {data_.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<const Eigen::MatrixXd> matrix(const Segment& s) const {
        return {data_.data() + s.offset, s.rows, s.cols};
    }

    Eigen::VectorXd flatten() const {
        return Eigen::Map<const Eigen::VectorXd>(data_.data(),
                                                 static_cast<Eigen::Index>(data_.size()));
    }

    void unflatten(const Eigen::VectorXd& v) {
        if (static_cast<std::size_t>(v.size()) != data_.size())
            throw ShapeMismatch("unflatten: expected " + std::to_string(data_.size()) +
                                " values, got " + std::to_string(v.size()));
        Eigen::Map<Eigen::VectorXd>(data_.data(), v.size()) = v;
    }

  private:
    std::vector<Segment> segments_;
    // Aligned storage keeps the mapped weight matrices at the same base
    // alignment on every run, so Eigen picks identical kernel paths and
    // training stays bitwise reproducible.
    std::vector<double, Eigen::aligned_allocator<double>> data_;
};

struct GradientPair {
    Eigen::VectorXd d_logamp;
    Eigen::VectorXd d_phase;
};

namespace detail {

// One MLP: hidden_layers ReLU layers of hidden_width, then a linear map to
// n_out. Weight l has fan-in = previous width.
inline void add_mlp(ParameterSet& p, const std::string& name, int n_in, int n_out,
                    const ArchConfig& a) {
    int in = n_in;
    for (int l = 0; l < a.hidden_layers; ++l) {
        p.add(name + ".w" + std::to_string(l), a.hidden_width, in);
        p.add(name + ".b" + std::to_string(l), a.hidden_width, 1);
        in = a.hidden_width;
    }
    p.add(name + ".w" + std::to_string(a.hidden_layers), n_out, in);
    p.add(name + ".b" + std::to_string(a.hidden_layers), n_out, 1);
}

inline void add_gnn_stack(ParameterSet& p, const std::string& prefix, int code_width,
                          int n_out, const ArchConfig& a) {
    add_mlp(p, prefix + "enc_v", 1 + code_width, a.embed_dim, a);
    add_mlp(p, prefix + "enc_e", 1, a.embed_dim, a);
    for (int t = 0; t < a.mp_steps; ++t) {
        const std::string step = prefix + "mp" + std::to_string(t);
        add_mlp(p, step + ".edge", 3 * a.embed_dim, a.embed_dim, a);
        add_mlp(p, step + ".node", 2 * a.embed_dim, a.embed_dim, a);
    }
    add_mlp(p, prefix + "dec_v", a.embed_dim, a.embed_dim, a);
    add_mlp(p, prefix + "dec_e", a.embed_dim, a.embed_dim, a);
    // final linear layer is bias-free so amplitudes stay size consistent
    p.add(prefix + "head.w", n_out, 2 * a.embed_dim);
}

} // namespace detail

// Parameter layout; n_sites only matters for the ResNet input layer.
inline ParameterSet make_parameters(const ArchConfig& a, int code_width, int n_sites = 0) {
    check(a.embed_dim > 0 && a.hidden_width > 0 && a.hidden_layers > 0 && a.mp_steps > 0,
          "architecture counts must be positive");
    check(code_width >= 0, "code width must be non-negative");
    ParameterSet p;
    switch (a.variant) {
        case Variant::GNN:
            detail::add_gnn_stack(p, "", code_width, 2, a);
            break;
        case Variant::GNN2:
            detail::add_gnn_stack(p, "amp.", code_width, 1, a);
            detail::add_gnn_stack(p, "phase.", code_width, 1, a);
            break;
        case Variant::ResNet: {
            check(n_sites > 0, "ResNet layout needs the site count");
            const int in = n_sites * (1 + code_width);
            p.add("stem.w", a.hidden_width, in);
            p.add("stem.b", a.hidden_width, 1);
            for (int t = 0; t < a.mp_steps; ++t) {
                const std::string blk = "block" + std::to_string(t);
                p.add(blk + ".w1", a.hidden_width, a.hidden_width);
                p.add(blk + ".b1", a.hidden_width, 1);
                p.add(blk + ".w2", a.hidden_width, a.hidden_width);
                p.add(blk + ".b2", a.hidden_width, 1);
            }
            p.add("head.w", 2, a.hidden_width);
            break;
        }
    }
    return p;
}

// Fan-in variance-scaled uniform weights, zero biases; bit-reproducible for a
// given seed because the generator and the uniform mapping are our own.
inline void init_parameters(ParameterSet& p, std::uint64_t seed);

// Layout plus initialization in one call, seeded from the arch.
inline ParameterSet init_params(const ArchConfig& a, int code_width, int n_sites = 0) {
    ParameterSet p = make_parameters(a, code_width, n_sites);
    init_parameters(p, a.seed);
    return p;
}

inline void init_parameters(ParameterSet& p, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& s : p.segments()) {
        const bool is_bias = s.cols == 1 && s.name.find(".b") != std::string::npos;
        double* base = p.data() + s.offset;
        if (is_bias) {
            for (std::size_t k = 0; k < s.count(); ++k) base[k] = 0.0;
        } else {
            const double limit = std::sqrt(3.0 / static_cast<double>(s.cols));
            for (std::size_t k = 0; k < s.count(); ++k)
                base[k] = limit * (2.0 * rng.uniform() - 1.0);
        }
    }
}

} // namespace gvmc
