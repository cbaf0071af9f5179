// Batched forward and reverse-mode evaluation of the wave-function networks.
//
// Everything is laid out column-major with one column per (config, node) or
// (config, edge), so the heavy lifting is dense GEMMs over wide blocks while
// gathers and scatters move columns around the graph. The backward pass is a
// hand-written adjoint of the forward pass; it accepts per-config seeds on
// (log-amplitude, phase) and returns the weighted gradient sum in one sweep,
// which is all the estimators ever need. Workspaces persist across chunks so
// steady-state evaluation performs no allocation.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gvmc/common.hpp"
#include "gvmc/lattice.hpp"
#include "gvmc/params.hpp"

namespace gvmc {

struct AmplitudePair {
    double logamp = 0.0;
    double phase = 0.0;
};

// Static evaluation context: the directed graph, per-site sublattice codes,
// and per-edge input features. Built once per (cluster, codes, arch, j2).
struct EvalContext {
    Cluster cluster;
    ArchConfig arch;
    int code_width = 0;               // K; 0 means no codes are fed
    std::vector<int> node_class;      // per site, in [0, max(K,1))
    std::vector<int> edge_src, edge_dst;   // directed edges, both orientations
    std::vector<int> edge_bucket;     // distinct static edge inputs
    std::vector<double> edge_input;   // one value per bucket
    int n_sites = 0;
    int n_edges = 0;                  // directed

    int n_node_buckets() const { return 2 * std::max(code_width, 1); }
    int n_edge_buckets() const { return static_cast<int>(edge_input.size()); }
};

// The graph carries the NNN shell only when that coupling is actually present
// in the Hamiltonian; edges are interactions, not geometry.
inline EvalContext make_context(const Cluster& cluster, const SublatticeEncoding& codes,
                                const ArchConfig& arch, double j2 = 0.0) {
    if (codes.n_classes > 0 && static_cast<int>(codes.code.size()) != cluster.n_sites)
        throw ShapeMismatch("sublattice encoding does not match the cluster");
    EvalContext ctx;
    ctx.cluster = cluster;
    ctx.arch = arch;
    ctx.code_width = codes.n_classes;
    ctx.node_class.assign(cluster.n_sites, 0);
    if (ctx.code_width > 0)
        for (int i = 0; i < cluster.n_sites; ++i) ctx.node_class[i] = codes.code[i];
    ctx.n_sites = cluster.n_sites;

    const bool with_nnn = j2 != 0.0;
    auto add_shell = [&](const std::vector<Edge>& shell, double coupling) {
        double input = arch.coupling_edge_feature ? coupling : 0.0;
        int bucket = -1;
        for (int b = 0; b < static_cast<int>(ctx.edge_input.size()); ++b)
            if (ctx.edge_input[b] == input) bucket = b;
        if (bucket < 0) {
            bucket = static_cast<int>(ctx.edge_input.size());
            ctx.edge_input.push_back(input);
        }
        for (const auto& e : shell) {
            ctx.edge_src.push_back(e.i);
            ctx.edge_dst.push_back(e.j);
            ctx.edge_bucket.push_back(bucket);
            ctx.edge_src.push_back(e.j);
            ctx.edge_dst.push_back(e.i);
            ctx.edge_bucket.push_back(bucket);
        }
    };
    add_shell(cluster.edges_nn, 1.0);
    if (with_nnn && !cluster.edges_nnn.empty()) add_shell(cluster.edges_nnn, j2);
    ctx.n_edges = static_cast<int>(ctx.edge_src.size());
    check(ctx.n_edges > 0, "cluster has no edges");
    return ctx;
}

namespace detail {

using Eigen::MatrixXd;

struct SegView {
    const double* p = nullptr;
    int rows = 0, cols = 0;
    Eigen::Map<const MatrixXd> mat() const { return {p, rows, cols}; }
};

struct SegGrad {
    double* p = nullptr;
    int rows = 0, cols = 0;
    Eigen::Map<MatrixXd> mat() const { return {p, rows, cols}; }
};

// Weight/bias views for one MLP, resolved once per evaluation.
struct MlpView {
    std::vector<SegView> w, b;
};

struct MlpGrad {
    std::vector<SegGrad> w, b;
};

inline MlpView bind_mlp(const ParameterSet& p, const std::string& name, int layers) {
    MlpView m;
    for (int l = 0; l <= layers; ++l) {
        const Segment& sw = p.segment(name + ".w" + std::to_string(l));
        const Segment& sb = p.segment(name + ".b" + std::to_string(l));
        m.w.push_back({p.data() + sw.offset, sw.rows, sw.cols});
        m.b.push_back({p.data() + sb.offset, sb.rows, sb.cols});
    }
    return m;
}

inline MlpGrad bind_mlp_grad(const ParameterSet& p, Eigen::VectorXd& g,
                             const std::string& name, int layers) {
    MlpGrad m;
    for (int l = 0; l <= layers; ++l) {
        const Segment& sw = p.segment(name + ".w" + std::to_string(l));
        const Segment& sb = p.segment(name + ".b" + std::to_string(l));
        m.w.push_back({g.data() + sw.offset, sw.rows, sw.cols});
        m.b.push_back({g.data() + sb.offset, sb.rows, sb.cols});
    }
    return m;
}

// Persistent activations of one MLP application. act[0] is the raw input,
// filled by the caller before mlp_forward; act[1..L] hold the post-ReLU
// hidden activations, which double as the ReLU masks in the backward pass.
struct MlpWork {
    std::vector<MatrixXd> act;
    MatrixXd out;
    MatrixXd bwd1, bwd2;  // backward ping-pong scratch

    MatrixXd& input(int layers) {
        act.resize(static_cast<std::size_t>(layers) + 1);
        return act[0];
    }
};

inline void mlp_forward(const MlpView& m, MlpWork& w) {
    const int layers = static_cast<int>(m.w.size()) - 1;
    w.act.resize(static_cast<std::size_t>(layers) + 1);
    for (int l = 0; l < layers; ++l) {
        w.act[l + 1].noalias() = m.w[l].mat() * w.act[l];
        w.act[l + 1].colwise() += m.b[l].mat().col(0);
        w.act[l + 1] = w.act[l + 1].cwiseMax(0.0);
    }
    w.out.noalias() = m.w[layers].mat() * w.act[layers];
    w.out.colwise() += m.b[layers].mat().col(0);
}

// Accumulates parameter gradients for the seed d(out) and, unless dinput is
// null, writes the input adjoint. The seed is left untouched.
inline void mlp_backward(const MlpView& m, MlpGrad& g, MlpWork& w, const MatrixXd& seed,
                         MatrixXd* dinput) {
    const int layers = static_cast<int>(m.w.size()) - 1;
    const MatrixXd* cur = &seed;
    for (int l = layers; l >= 0; --l) {
        g.w[l].mat().noalias() += *cur * w.act[l].transpose();
        g.b[l].mat().col(0).noalias() += cur->rowwise().sum();
        if (l == 0) break;
        MatrixXd& next = (cur == &w.bwd1) ? w.bwd2 : w.bwd1;
        next.noalias() = m.w[l].mat().transpose() * *cur;
        next.array() *= (w.act[l].array() > 0.0).cast<double>();
        cur = &next;
    }
    if (dinput != nullptr) dinput->noalias() = m.w[0].mat().transpose() * *cur;
}

// Column gather/scatter helpers; columns are contiguous in memory.
inline void copy_col(double* dst, const double* src, int n) {
    std::memcpy(dst, src, static_cast<std::size_t>(n) * sizeof(double));
}

inline void add_col(double* dst, const double* src, int n) {
    for (int k = 0; k < n; ++k) dst[k] += src[k];
}

struct GnnView {
    MlpView enc_v, enc_e;
    std::vector<MlpView> mp_edge, mp_node;
    MlpView dec_v, dec_e;
    SegView head;
};

struct GnnGrad {
    MlpGrad enc_v, enc_e;
    std::vector<MlpGrad> mp_edge, mp_node;
    MlpGrad dec_v, dec_e;
    SegGrad head;
};

inline GnnView bind_gnn(const ParameterSet& p, const std::string& prefix, const ArchConfig& a) {
    GnnView v;
    v.enc_v = bind_mlp(p, prefix + "enc_v", a.hidden_layers);
    v.enc_e = bind_mlp(p, prefix + "enc_e", a.hidden_layers);
    for (int t = 0; t < a.mp_steps; ++t) {
        const std::string step = prefix + "mp" + std::to_string(t);
        v.mp_edge.push_back(bind_mlp(p, step + ".edge", a.hidden_layers));
        v.mp_node.push_back(bind_mlp(p, step + ".node", a.hidden_layers));
    }
    v.dec_v = bind_mlp(p, prefix + "dec_v", a.hidden_layers);
    v.dec_e = bind_mlp(p, prefix + "dec_e", a.hidden_layers);
    const Segment& sh = p.segment(prefix + "head.w");
    v.head = {p.data() + sh.offset, sh.rows, sh.cols};
    return v;
}

inline GnnGrad bind_gnn_grad(const ParameterSet& p, Eigen::VectorXd& g,
                             const std::string& prefix, const ArchConfig& a) {
    GnnGrad v;
    v.enc_v = bind_mlp_grad(p, g, prefix + "enc_v", a.hidden_layers);
    v.enc_e = bind_mlp_grad(p, g, prefix + "enc_e", a.hidden_layers);
    for (int t = 0; t < a.mp_steps; ++t) {
        const std::string step = prefix + "mp" + std::to_string(t);
        v.mp_edge.push_back(bind_mlp_grad(p, g, step + ".edge", a.hidden_layers));
        v.mp_node.push_back(bind_mlp_grad(p, g, step + ".node", a.hidden_layers));
    }
    v.dec_v = bind_mlp_grad(p, g, prefix + "dec_v", a.hidden_layers);
    v.dec_e = bind_mlp_grad(p, g, prefix + "dec_e", a.hidden_layers);
    const Segment& sh = p.segment(prefix + "head.w");
    v.head = {g.data() + sh.offset, sh.rows, sh.cols};
    return v;
}

// Retained state of one GNN chunk; persists across chunks for buffer reuse.
struct GnnWork {
    int B = 0;
    std::vector<int> node_bucket;
    MlpWork enc_v, enc_e;
    struct Step {
        MlpWork edge, node;
    };
    std::vector<Step> steps;
    MatrixXd v, e;                    // running embeddings (decoder inputs)
    MlpWork dec_v, dec_e;
    MatrixXd z, out;
    // backward scratch
    MatrixXd dz, dva, dea, dv, de, dde, dni, dei, dbucket_v, dbucket_e;
};

inline void gnn_forward(const GnnView& net, const EvalContext& ctx,
                        const std::int8_t* spins, int B, GnnWork& f) {
    const int N = ctx.n_sites, E = ctx.n_edges, d = ctx.arch.embed_dim;
    const int K = std::max(ctx.code_width, 1);
    const int T = ctx.arch.mp_steps;
    const int L = ctx.arch.hidden_layers;
    f.B = B;
    f.steps.resize(T);

    // Node encoder over the distinct (class, spin) buckets only.
    MatrixXd& enc_in = f.enc_v.input(L);
    enc_in.setZero(1 + ctx.code_width, 2 * K);
    for (int c = 0; c < K; ++c)
        for (int s = 0; s < 2; ++s) {
            const int col = 2 * c + s;
            enc_in(0, col) = s == 0 ? -1.0 : 1.0;
            if (ctx.code_width > 0) enc_in(1 + c, col) = 1.0;
        }
    mlp_forward(net.enc_v, f.enc_v);
    const MatrixXd& v_bucket = f.enc_v.out;

    f.node_bucket.resize(static_cast<std::size_t>(B) * N);
    f.v.resize(d, static_cast<Eigen::Index>(B) * N);
    for (int b = 0; b < B; ++b) {
        const std::int8_t* s = spins + static_cast<std::size_t>(b) * N;
        for (int i = 0; i < N; ++i) {
            const int bucket = 2 * ctx.node_class[i] + (s[i] > 0 ? 1 : 0);
            f.node_bucket[static_cast<std::size_t>(b) * N + i] = bucket;
            copy_col(f.v.col(static_cast<Eigen::Index>(b) * N + i).data(),
                     v_bucket.col(bucket).data(), d);
        }
    }

    // Edge encoder over the distinct static inputs.
    MatrixXd& enc_e_in = f.enc_e.input(L);
    enc_e_in.resize(1, ctx.n_edge_buckets());
    for (int b = 0; b < ctx.n_edge_buckets(); ++b) enc_e_in(0, b) = ctx.edge_input[b];
    mlp_forward(net.enc_e, f.enc_e);

    f.e.resize(d, static_cast<Eigen::Index>(B) * E);
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < E; ++k)
            copy_col(f.e.col(static_cast<Eigen::Index>(b) * E + k).data(),
                     f.enc_e.out.col(ctx.edge_bucket[k]).data(), d);

    for (int t = 0; t < T; ++t) {
        MatrixXd& edge_in = f.steps[t].edge.input(L);
        edge_in.resize(3 * d, static_cast<Eigen::Index>(B) * E);
        for (int b = 0; b < B; ++b) {
            const Eigen::Index eoff = static_cast<Eigen::Index>(b) * E;
            const Eigen::Index noff = static_cast<Eigen::Index>(b) * N;
            for (int k = 0; k < E; ++k) {
                double* col = edge_in.col(eoff + k).data();
                copy_col(col, f.e.col(eoff + k).data(), d);
                copy_col(col + d, f.v.col(noff + ctx.edge_src[k]).data(), d);
                copy_col(col + 2 * d, f.v.col(noff + ctx.edge_dst[k]).data(), d);
            }
        }
        mlp_forward(net.mp_edge[t], f.steps[t].edge);
        const MatrixXd& de = f.steps[t].edge.out;

        MatrixXd& node_in = f.steps[t].node.input(L);
        node_in.resize(2 * d, static_cast<Eigen::Index>(B) * N);
        node_in.topRows(d) = f.v;
        node_in.bottomRows(d).setZero();
        for (int b = 0; b < B; ++b) {
            const Eigen::Index eoff = static_cast<Eigen::Index>(b) * E;
            const Eigen::Index noff = static_cast<Eigen::Index>(b) * N;
            for (int k = 0; k < E; ++k)
                add_col(node_in.col(noff + ctx.edge_dst[k]).data() + d, de.col(eoff + k).data(),
                        d);
        }
        mlp_forward(net.mp_node[t], f.steps[t].node);
        f.v += f.steps[t].node.out;
        f.e += de;
    }

    f.dec_v.input(L) = f.v;
    mlp_forward(net.dec_v, f.dec_v);
    f.dec_e.input(L) = f.e;
    mlp_forward(net.dec_e, f.dec_e);

    f.z.resize(2 * d, B);
    for (int b = 0; b < B; ++b) {
        f.z.col(b).head(d) =
            f.dec_v.out.middleCols(static_cast<Eigen::Index>(b) * N, N).rowwise().sum();
        f.z.col(b).tail(d) =
            f.dec_e.out.middleCols(static_cast<Eigen::Index>(b) * E, E).rowwise().sum();
    }
    f.out.noalias() = net.head.mat() * f.z;
}

// Adjoint of gnn_forward; dout has one column of head seeds per config.
inline void gnn_backward(const GnnView& net, GnnGrad& grad, const EvalContext& ctx, GnnWork& f,
                         const MatrixXd& dout) {
    const int N = ctx.n_sites, E = ctx.n_edges, d = ctx.arch.embed_dim;
    const int T = ctx.arch.mp_steps;
    const int B = f.B;

    grad.head.mat().noalias() += dout * f.z.transpose();
    f.dz.noalias() = net.head.mat().transpose() * dout;

    f.dva.resize(d, static_cast<Eigen::Index>(B) * N);
    f.dea.resize(d, static_cast<Eigen::Index>(B) * E);
    for (int b = 0; b < B; ++b) {
        f.dva.middleCols(static_cast<Eigen::Index>(b) * N, N).colwise() = f.dz.col(b).head(d);
        f.dea.middleCols(static_cast<Eigen::Index>(b) * E, E).colwise() = f.dz.col(b).tail(d);
    }
    mlp_backward(net.dec_v, grad.dec_v, f.dec_v, f.dva, &f.dv);
    mlp_backward(net.dec_e, grad.dec_e, f.dec_e, f.dea, &f.de);

    for (int t = T - 1; t >= 0; --t) {
        // v_{t+1} = v_t + node([v_t; agg]); the node input adjoint splits into
        // a direct v_t part and the aggregated incoming-edge part.
        mlp_backward(net.mp_node[t], grad.mp_node[t], f.steps[t].node, f.dv, &f.dni);
        f.dv += f.dni.topRows(d);

        // The edge delta feeds both e_{t+1} and the destination aggregation.
        f.dde = f.de;
        for (int b = 0; b < B; ++b) {
            const Eigen::Index eoff = static_cast<Eigen::Index>(b) * E;
            const Eigen::Index noff = static_cast<Eigen::Index>(b) * N;
            for (int k = 0; k < E; ++k)
                add_col(f.dde.col(eoff + k).data(), f.dni.col(noff + ctx.edge_dst[k]).data() + d,
                        d);
        }
        mlp_backward(net.mp_edge[t], grad.mp_edge[t], f.steps[t].edge, f.dde, &f.dei);
        f.de += f.dei.topRows(d);
        for (int b = 0; b < B; ++b) {
            const Eigen::Index eoff = static_cast<Eigen::Index>(b) * E;
            const Eigen::Index noff = static_cast<Eigen::Index>(b) * N;
            for (int k = 0; k < E; ++k) {
                const double* col = f.dei.col(eoff + k).data();
                add_col(f.dv.col(noff + ctx.edge_src[k]).data(), col + d, d);
                add_col(f.dv.col(noff + ctx.edge_dst[k]).data(), col + 2 * d, d);
            }
        }
    }

    f.dbucket_v.setZero(d, 2 * std::max(ctx.code_width, 1));
    for (Eigen::Index c = 0; c < f.dv.cols(); ++c)
        add_col(f.dbucket_v.col(f.node_bucket[static_cast<std::size_t>(c)]).data(),
                f.dv.col(c).data(), d);
    mlp_backward(net.enc_v, grad.enc_v, f.enc_v, f.dbucket_v, nullptr);

    f.dbucket_e.setZero(d, ctx.n_edge_buckets());
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < E; ++k)
            add_col(f.dbucket_e.col(ctx.edge_bucket[k]).data(),
                    f.de.col(static_cast<Eigen::Index>(b) * E + k).data(), d);
    mlp_backward(net.enc_e, grad.enc_e, f.enc_e, f.dbucket_e, nullptr);
}

// ResNet path: flattened [spin; one-hot] input, residual two-layer blocks.
struct ResView {
    SegView stem_w, stem_b;
    std::vector<SegView> w1, b1, w2, b2;
    SegView head;
};

struct ResGrad {
    SegGrad stem_w, stem_b;
    std::vector<SegGrad> w1, b1, w2, b2;
    SegGrad head;
};

inline ResView bind_res(const ParameterSet& p, const ArchConfig& a) {
    auto view = [&](const std::string& n) {
        const Segment& s = p.segment(n);
        return SegView{p.data() + s.offset, s.rows, s.cols};
    };
    ResView v;
    v.stem_w = view("stem.w");
    v.stem_b = view("stem.b");
    for (int t = 0; t < a.mp_steps; ++t) {
        const std::string blk = "block" + std::to_string(t);
        v.w1.push_back(view(blk + ".w1"));
        v.b1.push_back(view(blk + ".b1"));
        v.w2.push_back(view(blk + ".w2"));
        v.b2.push_back(view(blk + ".b2"));
    }
    v.head = view("head.w");
    return v;
}

inline ResGrad bind_res_grad(const ParameterSet& p, Eigen::VectorXd& g, const ArchConfig& a) {
    auto view = [&](const std::string& n) {
        const Segment& s = p.segment(n);
        return SegGrad{g.data() + s.offset, s.rows, s.cols};
    };
    ResGrad v;
    v.stem_w = view("stem.w");
    v.stem_b = view("stem.b");
    for (int t = 0; t < a.mp_steps; ++t) {
        const std::string blk = "block" + std::to_string(t);
        v.w1.push_back(view(blk + ".w1"));
        v.b1.push_back(view(blk + ".b1"));
        v.w2.push_back(view(blk + ".w2"));
        v.b2.push_back(view(blk + ".b2"));
    }
    v.head = view("head.w");
    return v;
}

struct ResWork {
    MatrixXd input;                // flattened input, D x B
    MatrixXd stem;                 // post-ReLU stem activation
    std::vector<MatrixXd> h_in;    // block inputs
    std::vector<MatrixXd> a1, a2;  // post-ReLU block activations
    MatrixXd h_fin, out;
    MatrixXd dh, da1, da2;
};

inline void res_forward(const ResView& net, const EvalContext& ctx,
                        const std::int8_t* spins, int B, ResWork& f) {
    const int N = ctx.n_sites, K = ctx.code_width;
    const int D = N * (1 + K);
    const int T = ctx.arch.mp_steps;

    f.input.setZero(D, B);
    for (int b = 0; b < B; ++b) {
        const std::int8_t* s = spins + static_cast<std::size_t>(b) * N;
        for (int i = 0; i < N; ++i) {
            f.input(i, b) = static_cast<double>(s[i]);
            if (K > 0) f.input(N + static_cast<Eigen::Index>(i) * K + ctx.node_class[i], b) = 1.0;
        }
    }

    f.stem.noalias() = net.stem_w.mat() * f.input;
    f.stem.colwise() += net.stem_b.mat().col(0);
    f.stem = f.stem.cwiseMax(0.0);
    f.h_in.resize(T);
    f.a1.resize(T);
    f.a2.resize(T);
    f.h_fin = f.stem;
    for (int t = 0; t < T; ++t) {
        f.h_in[t] = f.h_fin;
        f.a1[t].noalias() = net.w1[t].mat() * f.h_in[t];
        f.a1[t].colwise() += net.b1[t].mat().col(0);
        f.a1[t] = f.a1[t].cwiseMax(0.0);
        f.a2[t].noalias() = net.w2[t].mat() * f.a1[t];
        f.a2[t].colwise() += net.b2[t].mat().col(0);
        f.a2[t] = f.a2[t].cwiseMax(0.0);
        f.h_fin += f.a2[t];
    }
    f.out.noalias() = net.head.mat() * f.h_fin;
}

inline void res_backward(const ResView& net, ResGrad& grad, const EvalContext& ctx, ResWork& f,
                         const MatrixXd& dout) {
    const int T = ctx.arch.mp_steps;
    grad.head.mat().noalias() += dout * f.h_fin.transpose();
    f.dh.noalias() = net.head.mat().transpose() * dout;

    for (int t = T - 1; t >= 0; --t) {
        f.da2 = f.dh;
        f.da2.array() *= (f.a2[t].array() > 0.0).cast<double>();
        grad.w2[t].mat().noalias() += f.da2 * f.a1[t].transpose();
        grad.b2[t].mat().col(0).noalias() += f.da2.rowwise().sum();
        f.da1.noalias() = net.w2[t].mat().transpose() * f.da2;
        f.da1.array() *= (f.a1[t].array() > 0.0).cast<double>();
        grad.w1[t].mat().noalias() += f.da1 * f.h_in[t].transpose();
        grad.b1[t].mat().col(0).noalias() += f.da1.rowwise().sum();
        f.dh.noalias() += net.w1[t].mat().transpose() * f.da1;
    }
    f.dh.array() *= (f.stem.array() > 0.0).cast<double>();
    grad.stem_w.mat().noalias() += f.dh * f.input.transpose();
    grad.stem_b.mat().col(0).noalias() += f.dh.rowwise().sum();
}

// Chunks are sized so the widest GEMM operand of a chunk stays around the L2
// working set; measurements show throughput degrades well before any total
// memory limit is reached.
inline int chunk_size(const EvalContext& ctx) {
    const ArchConfig& a = ctx.arch;
    std::size_t operand_bytes;  // per configuration
    if (a.variant == Variant::ResNet)
        operand_bytes = static_cast<std::size_t>(a.hidden_width) * sizeof(double);
    else
        operand_bytes = static_cast<std::size_t>(3 * a.embed_dim) * ctx.n_edges * sizeof(double);
    const std::size_t target = 2ull * 1024 * 1024;
    const std::size_t b = target / std::max<std::size_t>(operand_bytes, 1);
    return static_cast<int>(std::max<std::size_t>(8, std::min<std::size_t>(b, 256)));
}

inline void pack_spins(const EvalContext& ctx, const SpinConfiguration* configs, int B,
                       std::vector<std::int8_t>& buf) {
    const int N = ctx.n_sites;
    buf.resize(static_cast<std::size_t>(B) * N);
    for (int b = 0; b < B; ++b) {
        const auto& c = configs[b];
        if (static_cast<int>(c.spins.size()) != N)
            throw LengthMismatch("configuration does not match the cluster");
        std::memcpy(buf.data() + static_cast<std::size_t>(b) * N, c.spins.data(), N);
    }
}

} // namespace detail

// Reusable evaluation workspace; optional for callers, required for hot loops
// that want allocation-free steady state.
struct NetWork {
    detail::GnnWork gnn_a, gnn_b;
    detail::ResWork res;
    std::vector<std::int8_t> spins;
    Eigen::MatrixXd dout;
};

// Log-amplitude and phase for a batch of configurations.
inline void evaluate_into(const ParameterSet& params, const EvalContext& ctx,
                          const SpinConfiguration* configs, std::size_t count,
                          AmplitudePair* out, NetWork& work) {
    const ArchConfig& a = ctx.arch;
    const int chunk = detail::chunk_size(ctx);

    if (a.variant == Variant::ResNet) {
        detail::ResView net = detail::bind_res(params, a);
        for (std::size_t at = 0; at < count; at += chunk) {
            const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
            detail::pack_spins(ctx, configs + at, B, work.spins);
            detail::res_forward(net, ctx, work.spins.data(), B, work.res);
            for (int b = 0; b < B; ++b) out[at + b] = {work.res.out(0, b), work.res.out(1, b)};
        }
        return;
    }

    if (a.variant == Variant::GNN) {
        detail::GnnView net = detail::bind_gnn(params, "", a);
        for (std::size_t at = 0; at < count; at += chunk) {
            const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
            detail::pack_spins(ctx, configs + at, B, work.spins);
            detail::gnn_forward(net, ctx, work.spins.data(), B, work.gnn_a);
            for (int b = 0; b < B; ++b)
                out[at + b] = {work.gnn_a.out(0, b), work.gnn_a.out(1, b)};
        }
        return;
    }

    detail::GnnView amp = detail::bind_gnn(params, "amp.", a);
    detail::GnnView phase = detail::bind_gnn(params, "phase.", a);
    for (std::size_t at = 0; at < count; at += chunk) {
        const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
        detail::pack_spins(ctx, configs + at, B, work.spins);
        detail::gnn_forward(amp, ctx, work.spins.data(), B, work.gnn_a);
        detail::gnn_forward(phase, ctx, work.spins.data(), B, work.gnn_b);
        for (int b = 0; b < B; ++b)
            out[at + b] = {work.gnn_a.out(0, b), work.gnn_b.out(0, b)};
    }
}

inline std::vector<AmplitudePair> evaluate(const ParameterSet& params, const EvalContext& ctx,
                                           const SpinConfiguration* configs, std::size_t count) {
    std::vector<AmplitudePair> out(count);
    NetWork work;
    evaluate_into(params, ctx, configs, count, out.data(), work);
    return out;
}

inline std::vector<AmplitudePair> evaluate(const ParameterSet& params, const EvalContext& ctx,
                                           const std::vector<SpinConfiguration>& configs) {
    return evaluate(params, ctx, configs.data(), configs.size());
}

inline AmplitudePair evaluate_one(const ParameterSet& params, const EvalContext& ctx,
                                  const SpinConfiguration& config) {
    return evaluate(params, ctx, &config, 1)[0];
}

// Sum over configs of a[b] * grad(logamp_b) + c[b] * grad(phase_b), in one
// forward/backward sweep. This linear combination is the only gradient shape
// the estimators and the training loop consume, so it is the primitive.
inline void weighted_gradient_sum_into(const ParameterSet& params, const EvalContext& ctx,
                                       const SpinConfiguration* configs, std::size_t count,
                                       const Eigen::VectorXd& a, const Eigen::VectorXd& c,
                                       Eigen::VectorXd& g, NetWork& work) {
    if (static_cast<std::size_t>(a.size()) != count || static_cast<std::size_t>(c.size()) != count)
        throw ShapeMismatch("weight vectors do not match the batch size");
    const ArchConfig& arch = ctx.arch;
    g.setZero(static_cast<Eigen::Index>(params.total_count()));
    if (count == 0) return;
    const int chunk = detail::chunk_size(ctx);

    if (arch.variant == Variant::ResNet) {
        detail::ResView net = detail::bind_res(params, arch);
        detail::ResGrad grad = detail::bind_res_grad(params, g, arch);
        for (std::size_t at = 0; at < count; at += chunk) {
            const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
            detail::pack_spins(ctx, configs + at, B, work.spins);
            detail::res_forward(net, ctx, work.spins.data(), B, work.res);
            work.dout.resize(2, B);
            work.dout.row(0) = a.segment(at, B).transpose();
            work.dout.row(1) = c.segment(at, B).transpose();
            detail::res_backward(net, grad, ctx, work.res, work.dout);
        }
        return;
    }

    if (arch.variant == Variant::GNN) {
        detail::GnnView net = detail::bind_gnn(params, "", arch);
        detail::GnnGrad grad = detail::bind_gnn_grad(params, g, "", arch);
        for (std::size_t at = 0; at < count; at += chunk) {
            const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
            detail::pack_spins(ctx, configs + at, B, work.spins);
            detail::gnn_forward(net, ctx, work.spins.data(), B, work.gnn_a);
            work.dout.resize(2, B);
            work.dout.row(0) = a.segment(at, B).transpose();
            work.dout.row(1) = c.segment(at, B).transpose();
            detail::gnn_backward(net, grad, ctx, work.gnn_a, work.dout);
        }
        return;
    }

    const bool need_amp = a.cwiseAbs().maxCoeff() != 0.0;
    const bool need_phase = c.cwiseAbs().maxCoeff() != 0.0;
    detail::GnnView amp = detail::bind_gnn(params, "amp.", arch);
    detail::GnnView phase = detail::bind_gnn(params, "phase.", arch);
    detail::GnnGrad amp_g = detail::bind_gnn_grad(params, g, "amp.", arch);
    detail::GnnGrad phase_g = detail::bind_gnn_grad(params, g, "phase.", arch);
    for (std::size_t at = 0; at < count; at += chunk) {
        const int B = static_cast<int>(std::min<std::size_t>(chunk, count - at));
        detail::pack_spins(ctx, configs + at, B, work.spins);
        if (need_amp) {
            detail::gnn_forward(amp, ctx, work.spins.data(), B, work.gnn_a);
            work.dout = a.segment(at, B).transpose();
            detail::gnn_backward(amp, amp_g, ctx, work.gnn_a, work.dout);
        }
        if (need_phase) {
            detail::gnn_forward(phase, ctx, work.spins.data(), B, work.gnn_b);
            work.dout = c.segment(at, B).transpose();
            detail::gnn_backward(phase, phase_g, ctx, work.gnn_b, work.dout);
        }
    }
}

inline Eigen::VectorXd weighted_gradient_sum(const ParameterSet& params, const EvalContext& ctx,
                                             const SpinConfiguration* configs, std::size_t count,
                                             const Eigen::VectorXd& a, const Eigen::VectorXd& c) {
    Eigen::VectorXd g;
    NetWork work;
    weighted_gradient_sum_into(params, ctx, configs, count, a, c, g, work);
    return g;
}

inline Eigen::VectorXd weighted_gradient_sum(const ParameterSet& params, const EvalContext& ctx,
                                             const std::vector<SpinConfiguration>& configs,
                                             const Eigen::VectorXd& a, const Eigen::VectorXd& c) {
    return weighted_gradient_sum(params, ctx, configs.data(), configs.size(), a, c);
}

// Per-parameter gradients of one configuration's log-amplitude and phase.
inline GradientPair gradients(const ParameterSet& params, const EvalContext& ctx,
                              const SpinConfiguration& config) {
    Eigen::VectorXd e1 = Eigen::VectorXd::Ones(1), e0 = Eigen::VectorXd::Zero(1);
    GradientPair out;
    out.d_logamp = weighted_gradient_sum(params, ctx, &config, 1, e1, e0);
    out.d_phase = weighted_gradient_sum(params, ctx, &config, 1, e0, e1);
    return out;
}

} // namespace gvmc
