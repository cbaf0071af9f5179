// Exact diagonalization oracle for desk-scale clusters: dense and iterative
// (Lanczos) ground-state solvers, Rayleigh quotients for amplitude tables,
// overlap with the exact state, and the translation-symmetric fraction.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#ifdef GVMC_HAVE_LAPACKE
#include <lapacke.h>
#endif

#include "gvmc/common.hpp"
#include "gvmc/hamiltonian.hpp"
#include "gvmc/lattice.hpp"
#include "gvmc/sector.hpp"

namespace gvmc {

// Sector Hamiltonian in CSR form; diagonal kept separate.
struct SparseHamiltonian {
    std::size_t dim = 0;
    std::vector<double> diag;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    void apply(const double* x, double* y) const {
        for (std::size_t r = 0; r < dim; ++r) {
            double acc = diag[r] * x[r];
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc += val[k] * x[col[k]];
            y[r] = acc;
        }
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        Eigen::VectorXd y(x.size());
        apply(x.data(), y.data());
        return y;
    }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(x.size());
        for (std::size_t r = 0; r < dim; ++r) {
            std::complex<double> acc = diag[r] * x[static_cast<Eigen::Index>(r)];
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc += val[k] * x[static_cast<Eigen::Index>(col[k])];
            y[static_cast<Eigen::Index>(r)] = acc;
        }
        return y;
    }
};

inline SparseHamiltonian build_sparse(const HeisenbergModel& m, const SectorBasis& basis) {
    SparseHamiltonian h;
    h.dim = basis.dimension();
    h.diag.resize(h.dim);
    h.row_ptr.resize(h.dim + 1, 0);
    for (std::size_t r = 0; r < h.dim; ++r) {
        const SpinConfiguration c = basis.configuration(r);
        const ConnectedRow row = connected_row(m, c);
        h.diag[r] = row.diagonal;
        const std::uint64_t bits = c.pack();
        for (const auto& o : row.off) {
            const std::uint64_t flipped = bits ^ ((1ULL << o.i) | (1ULL << o.j));
            h.col.push_back(static_cast<std::uint32_t>(basis.index_of(flipped)));
            h.val.push_back(o.element);
        }
        h.row_ptr[r + 1] = h.col.size();
    }
    return h;
}

// Dense symmetric eigendecomposition, all pairs, ascending eigenvalues.
inline void dense_eigh(Eigen::MatrixXd& a, Eigen::VectorXd& w) {
#ifdef GVMC_HAVE_LAPACKE
    const auto n = static_cast<lapack_int>(a.rows());
    w.resize(n);
    lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, a.data(), n, w.data());
    check(info == 0, "dsyevd failed, info=" + std::to_string(info));
#else
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    check(es.info() == Eigen::Success, "dense eigensolver failed");
    w = es.eigenvalues();
    a = es.eigenvectors();
#endif
}

struct ExactState {
    double energy = 0.0;
    Eigen::VectorXd vector;  // normalized; H is real symmetric so real suffices
};

struct EdOptions {
    std::size_t dense_cap = 12870;        // C(16,8)
    std::size_t iterative_cap = 184756;   // C(20,10)
    std::uint64_t seed = 7;
    int block = 96;        // Lanczos block size between restarts
    int max_restarts = 60;
    double tol = 1e-12;    // residual, relative to the spectral scale
};

// Lowest eigenpair via restarted Lanczos with full reorthogonalization.
inline ExactState lanczos_ground_state(const SparseHamiltonian& h, const EdOptions& opt = {}) {
    const auto dim = static_cast<Eigen::Index>(h.dim);
    if (h.dim > opt.iterative_cap)
        throw SectorTooLarge("iterative solver refused for dimension " + std::to_string(h.dim));
    if (dim == 1) {
        ExactState st;
        st.energy = h.diag[0];
        st.vector = Eigen::VectorXd::Ones(1);
        return st;
    }

    Rng rng(opt.seed);
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.uniform() - 0.5;
    v.normalize();

    const int m = std::min<int>(opt.block, static_cast<int>(dim));
    Eigen::MatrixXd basis(dim, m);
    Eigen::VectorXd alpha(m), beta(m);
    double scale = 1.0;

    for (int restart = 0; restart < opt.max_restarts; ++restart) {
        int built = 0;
        basis.col(0) = v;
        Eigen::VectorXd w(dim);
        for (int j = 0; j < m; ++j) {
            h.apply(basis.col(j).data(), w.data());
            alpha[j] = basis.col(j).dot(w);
            w -= alpha[j] * basis.col(j);
            if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
            // full reorthogonalization, twice for safety
            for (int pass = 0; pass < 2; ++pass)
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
            built = j + 1;
            beta[j] = w.norm();
            if (beta[j] < 1e-14) break;  // invariant subspace found
            if (j + 1 < m) basis.col(j + 1) = w / beta[j];
        }

        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(built, built);
        for (int j = 0; j < built; ++j) {
            t(j, j) = alpha[j];
            if (j + 1 < built) t(j, j + 1) = t(j + 1, j) = beta[j];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        scale = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[built - 1]));
        v = basis.leftCols(built) * es.eigenvectors().col(0);
        v.normalize();

        h.apply(v.data(), w.data());
        const double theta = v.dot(w);
        const double resid = (w - theta * v).norm();
        if (resid <= opt.tol * std::max(1.0, scale)) {
            ExactState st;
            st.energy = theta;
            st.vector = v;
            return st;
        }
    }
    throw Error("Lanczos did not converge");
}

inline ExactState dense_ground_state(const HeisenbergModel& m, const SectorBasis& basis,
                                     const EdOptions& opt = {}) {
    Eigen::MatrixXd h = dense_matrix(m, basis, opt.dense_cap);
    Eigen::VectorXd w;
    dense_eigh(h, w);
    ExactState st;
    st.energy = w[0];
    st.vector = h.col(0);
    return st;
}

// Dense path when the sector fits, Lanczos otherwise.
inline ExactState ground_state(const HeisenbergModel& m, const SectorBasis& basis,
                               const EdOptions& opt = {}) {
    if (basis.dimension() <= opt.dense_cap) return dense_ground_state(m, basis, opt);
    return lanczos_ground_state(build_sparse(m, basis), opt);
}

// First k eigenvalues (dense path only), for gap and excited-state checks.
inline Eigen::VectorXd lowest_eigenvalues(const HeisenbergModel& m, const SectorBasis& basis,
                                          int k, const EdOptions& opt = {}) {
    Eigen::MatrixXd h = dense_matrix(m, basis, opt.dense_cap);
    Eigen::VectorXd w;
    dense_eigh(h, w);
    return w.head(std::min<Eigen::Index>(k, w.size()));
}

// Build the (unnormalized) sector vector exp((logamp - max) + i phase).
inline Eigen::VectorXcd sector_vector(const Eigen::VectorXd& logamp, const Eigen::VectorXd& phase) {
    check(logamp.size() == phase.size(), "logamp/phase length mismatch");
    const double shift = logamp.maxCoeff();
    Eigen::VectorXcd psi(logamp.size());
    for (Eigen::Index i = 0; i < logamp.size(); ++i)
        psi[i] = std::polar(std::exp(logamp[i] - shift), phase[i]);
    return psi;
}

// Rayleigh quotient <psi|H|psi> / <psi|psi> for a tabulated wave-function.
// The imaginary part is a pure rounding residual and is checked, not returned.
inline double exact_energy(const SparseHamiltonian& h, const Eigen::VectorXd& logamp,
                           const Eigen::VectorXd& phase) {
    check(static_cast<std::size_t>(logamp.size()) == h.dim, "amplitude table size mismatch");
    const Eigen::VectorXcd psi = sector_vector(logamp, phase);
    const Eigen::VectorXcd hpsi = h.apply(psi);
    const std::complex<double> num = psi.dot(hpsi);  // conjugates psi
    const double den = psi.squaredNorm();
    check(den > 0.0, "wave-function has zero norm");
    const double e = num.real() / den;
    check(std::abs(num.imag() / den) <= 1e-10 * std::max(1.0, std::abs(e)),
          "Rayleigh quotient has a non-real residual");
    return e;
}

// |<exact|psi>| / |psi|, exact state already normalized.
inline double exact_overlap(const ExactState& gs, const Eigen::VectorXd& logamp,
                            const Eigen::VectorXd& phase) {
    check(gs.vector.size() == logamp.size(), "amplitude table size mismatch");
    const Eigen::VectorXcd psi = sector_vector(logamp, phase);
    std::complex<double> ip = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i) ip += gs.vector[i] * psi[i];
    return std::abs(ip) / psi.norm();
}

// Permutation action of the given site permutations on sector indices.
inline std::vector<std::vector<std::uint32_t>> sector_maps(
    const std::vector<std::vector<int>>& perms, const Cluster& cl, const SectorBasis& basis) {
    std::vector<std::vector<std::uint32_t>> maps;
    maps.reserve(perms.size());
    const std::size_t dim = basis.dimension();
    for (const auto& perm : perms) {
        std::vector<std::uint32_t> map(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            const std::uint64_t bits = basis.state(k);
            std::uint64_t moved = 0;
            for (int i = 0; i < cl.n_sites; ++i)
                if (bits & (1ULL << i)) moved |= (1ULL << perm[i]);
            map[k] = static_cast<std::uint32_t>(basis.index_of(moved));
        }
        maps.push_back(std::move(map));
    }
    return maps;
}

// Permutation action of each torus translation on sector indices.
inline std::vector<std::vector<std::uint32_t>> sector_translation_maps(const Cluster& cl,
                                                                       const SectorBasis& basis) {
    return sector_maps(translations(cl), cl, basis);
}

// Orbit decomposition of the sector under the torus translations that preserve
// a per-site code assignment (all translations when the code vector is empty).
struct SectorOrbits {
    std::vector<std::uint32_t> representative;       // lowest sector index per orbit
    std::vector<double> multiplicity;                // orbit sizes
    std::vector<std::vector<std::uint32_t>> maps;    // sector action of the kept group
    std::size_t group_order = 1;
};

inline SectorOrbits sector_orbits(const Cluster& cl, const std::vector<int>& code,
                                  const SectorBasis& basis) {
    std::vector<std::vector<int>> kept;
    for (auto& perm : translations(cl)) {
        bool preserves = true;
        for (int i = 0; preserves && i < cl.n_sites; ++i)
            if (!code.empty() && code[perm[i]] != code[i]) preserves = false;
        if (preserves) kept.push_back(std::move(perm));
    }
    SectorOrbits orb;
    orb.group_order = kept.size();
    orb.maps = sector_maps(kept, cl, basis);
    const std::size_t dim = basis.dimension();
    std::vector<char> seen(dim, 0);
    std::vector<std::uint32_t> orbit;
    for (std::uint32_t k = 0; k < dim; ++k) {
        if (seen[k]) continue;
        orbit.assign(1, k);
        seen[k] = 1;
        for (std::size_t head = 0; head < orbit.size(); ++head)
            for (const auto& map : orb.maps) {
                const std::uint32_t t = map[orbit[head]];
                if (!seen[t]) {
                    seen[t] = 1;
                    orbit.push_back(t);
                }
            }
        orb.representative.push_back(k);
        orb.multiplicity.push_back(static_cast<double>(orbit.size()));
    }
    return orb;
}

// ||P psi||^2 / ||psi||^2 with P the average over torus translations.
inline double symmetric_fraction(const Cluster& cl, const SectorBasis& basis,
                                 const Eigen::VectorXd& logamp, const Eigen::VectorXd& phase) {
    const Eigen::VectorXcd psi = sector_vector(logamp, phase);
    const auto maps = sector_translation_maps(cl, basis);
    Eigen::VectorXcd proj = Eigen::VectorXcd::Zero(psi.size());
    for (const auto& map : maps)
        for (Eigen::Index k = 0; k < psi.size(); ++k)
            proj[map[k]] += psi[k];
    proj /= static_cast<double>(maps.size());
    return proj.squaredNorm() / psi.squaredNorm();
}

// ---------------------------------------------------------------------------
// Reference energies per site from the published literature estimates.
struct ReferenceEnergy {
    LatticeKind kind;
    double j2;
    int n_sites;  // -1 marks a thermodynamic-limit estimate
    double energy_per_site;
};

inline const std::vector<ReferenceEnergy>& reference_energies() {
    static const std::vector<ReferenceEnergy> table = {
        {LatticeKind::Square, 0.5, 36, -0.503810},
        {LatticeKind::Square, 0.5, 100, -0.497629},
        {LatticeKind::Triangular, 0.0, 36, -0.5603734},
        {LatticeKind::Triangular, 0.0, -1, -0.551},
        {LatticeKind::Triangular, 0.125, 36, -0.515564},
        {LatticeKind::Triangular, 0.125, 108, -0.5126},
        {LatticeKind::Honeycomb, 0.2, 32, -0.460650},
        {LatticeKind::Honeycomb, 0.2, -1, -0.4527},
        {LatticeKind::Kagome, 0.0, 36, -0.43837653},
        {LatticeKind::Kagome, 0.0, 48, -0.438703897},
        {LatticeKind::Kagome, 0.0, 108, -0.4386},
    };
    return table;
}

inline std::optional<double> reference_energy(LatticeKind kind, double j2, int n_sites) {
    for (const auto& r : reference_energies())
        if (r.kind == kind && r.n_sites == n_sites && std::abs(r.j2 - j2) < 1e-12)
            return r.energy_per_site;
    return std::nullopt;
}

} // namespace gvmc
