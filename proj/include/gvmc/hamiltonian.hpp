// J1-J2 Heisenberg Hamiltonian on a cluster:
//   H = sum_<ij> S_i.S_j + j2 * sum_<<ij>> S_i.S_j,   NN coupling = 1.
// Matrix elements in the sigma^z basis: diagonal s_i s_j / 4 per bond,
// off-diagonal J/2 between configurations that differ by one spin exchange.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gvmc/common.hpp"
#include "gvmc/lattice.hpp"
#include "gvmc/sector.hpp"

namespace gvmc {

struct HeisenbergModel {
    Cluster cluster;
    double j2 = 0.0;

    int n_sites() const { return cluster.n_sites; }
};

inline HeisenbergModel make_model(const std::string& preset, double j2) {
    return HeisenbergModel{make_preset(preset), j2};
}

// One off-diagonal entry of a Hamiltonian row: the exchanged configuration
// is identified by the bond whose two (anti-parallel) spins were swapped.
struct OffDiagonal {
    int i = 0, j = 0;      // swapped sites
    double element = 0.0;  // J/2
};

struct ConnectedRow {
    double diagonal = 0.0;
    std::vector<OffDiagonal> off;
};

// Row of H through configuration c. Off-diagonal entries appear only for
// bonds with anti-parallel spins, so every listed neighbor keeps the
// magnetization of c. Row sparsity is at most 1 + #edges.
inline ConnectedRow connected_row(const HeisenbergModel& m, const SpinConfiguration& c) {
    if (static_cast<int>(c.size()) != m.n_sites())
        throw LengthMismatch("configuration length " + std::to_string(c.size()) +
                             " does not match cluster size " + std::to_string(m.n_sites()));
    ConnectedRow row;
    auto accumulate = [&](const std::vector<Edge>& edges, double coupling) {
        if (coupling == 0.0) return;
        for (const auto& e : edges) {
            const double si = c[e.i], sj = c[e.j];
            row.diagonal += coupling * si * sj * 0.25;
            if (si != sj) row.off.push_back({e.i, e.j, coupling * 0.5});
        }
    };
    accumulate(m.cluster.edges_nn, 1.0);
    accumulate(m.cluster.edges_nnn, m.j2);
    return row;
}

inline SpinConfiguration exchanged(const SpinConfiguration& c, int i, int j) {
    SpinConfiguration out = c;
    std::swap(out.spins[i], out.spins[j]);
    return out;
}

// Dense sector matrix; symmetric by construction of the spin algebra.
inline Eigen::MatrixXd dense_matrix(const HeisenbergModel& m, const SectorBasis& basis,
                                    std::size_t cap = 12870) {
    const std::size_t dim = basis.dimension();
    if (dim > cap) throw SectorTooLarge("dense matrix refused for dimension " +
                                        std::to_string(dim));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < dim; ++r) {
        const SpinConfiguration c = basis.configuration(r);
        const ConnectedRow row = connected_row(m, c);
        h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) = row.diagonal;
        for (const auto& o : row.off) {
            std::uint64_t bits = c.pack();
            bits ^= (1ULL << o.i) | (1ULL << o.j);  // swap anti-parallel pair
            const std::size_t col = basis.index_of(bits);
            h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) += o.element;
        }
    }
    return h;
}

} // namespace gvmc
