// Periodic lattice clusters: construction from primitive vectors and torus
// spans, NN/NNN shell classification, sublattice encodings, translations.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gvmc/common.hpp"

namespace gvmc {

enum class LatticeKind { Chain, Square, Honeycomb, Triangular, Kagome };

enum class SublatticePattern {
    None,        // no auxiliary codes (width-0 encoding)
    Neel,        // 2-class checkerboard, square / chain
    Orthogonal,  // 4-class 2x2 cell, square
    AF,          // 2-class bipartition, honeycomb
    Cubic,       // 4-class basis x cell parity, honeycomb
    Coplanar,    // 3-class (n1 - n2) mod 3, triangular
    Tetrahedral, // 4-class 2x2 cell, triangular
    QZero,       // 3-class basis index, kagome ("q = 0" state)
    RootThree,   // 9-class basis x sqrt3 cell, kagome
    Custom,      // caller-supplied class map
};

inline std::string to_string(LatticeKind k) {
    switch (k) {
        case LatticeKind::Chain: return "chain";
        case LatticeKind::Square: return "square";
        case LatticeKind::Honeycomb: return "honeycomb";
        case LatticeKind::Triangular: return "triangular";
        case LatticeKind::Kagome: return "kagome";
    }
    return "?";
}

inline std::string to_string(SublatticePattern p) {
    switch (p) {
        case SublatticePattern::None: return "none";
        case SublatticePattern::Neel: return "neel";
        case SublatticePattern::Orthogonal: return "orthogonal";
        case SublatticePattern::AF: return "af";
        case SublatticePattern::Cubic: return "cubic";
        case SublatticePattern::Coplanar: return "coplanar";
        case SublatticePattern::Tetrahedral: return "tetrahedral";
        case SublatticePattern::QZero: return "qzero";
        case SublatticePattern::RootThree: return "rootthree";
        case SublatticePattern::Custom: return "custom";
    }
    return "?";
}

inline LatticeKind lattice_kind_from_string(const std::string& s) {
    if (s == "chain") return LatticeKind::Chain;
    if (s == "square") return LatticeKind::Square;
    if (s == "honeycomb") return LatticeKind::Honeycomb;
    if (s == "triangular") return LatticeKind::Triangular;
    if (s == "kagome") return LatticeKind::Kagome;
    throw ConfigError("unknown lattice kind: " + s);
}

inline SublatticePattern pattern_from_string(const std::string& s) {
    if (s == "none") return SublatticePattern::None;
    if (s == "neel") return SublatticePattern::Neel;
    if (s == "orthogonal") return SublatticePattern::Orthogonal;
    if (s == "af") return SublatticePattern::AF;
    if (s == "cubic") return SublatticePattern::Cubic;
    if (s == "coplanar") return SublatticePattern::Coplanar;
    if (s == "tetrahedral") return SublatticePattern::Tetrahedral;
    if (s == "qzero") return SublatticePattern::QZero;
    if (s == "rootthree") return SublatticePattern::RootThree;
    if (s == "custom") return SublatticePattern::Custom;
    throw ConfigError("unknown sublattice pattern: " + s);
}

struct Vec2 {
    double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double c, Vec2 a) { return {c * a.x, c * a.y}; }
inline double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }

struct ClusterSpec {
    LatticeKind kind = LatticeKind::Square;
    Vec2 a1, a2;               // primitive cell vectors
    Vec2 b1, b2;               // torus span vectors
    std::vector<Vec2> basis;   // site offsets within one cell
    int expected_sites = -1;   // validated after construction when >= 0
};

// Unordered pair of site indices, stored with i < j.
struct Edge {
    int i = 0, j = 0;
    bool operator==(const Edge& o) const { return i == o.i && j == o.j; }
    bool operator<(const Edge& o) const { return i < o.i || (i == o.i && j < o.j); }
};

struct Cluster {
    ClusterSpec spec;
    int n_sites = 0;
    int n_cells = 0;
    std::vector<Vec2> position;              // cartesian coordinates
    std::vector<std::array<long, 3>> cell;   // (n1, n2, basis) per site
    std::vector<Edge> edges_nn;
    std::vector<Edge> edges_nnn;
    double shell_nn = 0.0;   // squared NN distance
    double shell_nnn = 0.0;  // squared NNN distance
    // torus span in cell coordinates, columns (m11,m21) and (m12,m22)
    long m11 = 1, m12 = 0, m21 = 0, m22 = 1;

    int coordination_nn() const {
        return n_sites ? static_cast<int>(2 * edges_nn.size()) / n_sites : 0;
    }
};

namespace detail {

inline constexpr double kShellTol = 1e-6;   // on squared distances
inline constexpr double kIntTol = 1e-6;     // integrality of A^-1 B

struct CellReducer {
    long m11, m12, m21, m22;  // column-major torus matrix, det > 0
    long det;

    CellReducer(long a, long b, long c, long d) : m11(a), m12(b), m21(c), m22(d) {
        det = m11 * m22 - m12 * m21;
        if (det < 0) {  // swap columns so the fundamental-domain math has det > 0
            std::swap(m11, m12);
            std::swap(m21, m22);
            det = -det;
        }
        if (det == 0) throw NonCommensurate("torus vectors are linearly dependent");
    }

    // canonical representative of (n1, n2) modulo the torus, exact integers
    std::array<long, 2> reduce(long n1, long n2) const {
        // adj(M) * n, then wrap each fractional coordinate into [0, det)
        long e1 = m22 * n1 - m12 * n2;
        long e2 = -m21 * n1 + m11 * n2;
        e1 = ((e1 % det) + det) % det;
        e2 = ((e2 % det) + det) % det;
        // M * frac; divisible by det by construction
        return {(m11 * e1 + m12 * e2) / det, (m21 * e1 + m22 * e2) / det};
    }
};

inline int expected_coordination(LatticeKind k) {
    switch (k) {
        case LatticeKind::Chain: return 2;
        case LatticeKind::Square: return 4;
        case LatticeKind::Honeycomb: return 3;
        case LatticeKind::Triangular: return 6;
        case LatticeKind::Kagome: return 4;
    }
    return 0;
}

inline std::vector<Vec2> default_basis(LatticeKind k) {
    const double r3 = std::sqrt(3.0);
    switch (k) {
        case LatticeKind::Honeycomb:
            return {{0.0, 0.0}, {r3 / 2.0, 0.5}};
        case LatticeKind::Kagome:
            return {{0.0, 0.0}, {0.5, 0.0}, {0.25, r3 / 4.0}};
        default:
            return {{0.0, 0.0}};
    }
}

inline Cluster build_chain(const ClusterSpec& spec) {
    // Ring of n sites along a1; NN = i,i+1 and NNN = i,i+2 (mod n).
    double len = std::sqrt(norm2(spec.b1)) / std::sqrt(norm2(spec.a1));
    long n = std::lround(len);
    if (std::abs(len - static_cast<double>(n)) > detail::kIntTol || n < 4)
        throw NonCommensurate("chain length must be an integer >= 4");

    Cluster cl;
    cl.spec = spec;
    cl.n_sites = static_cast<int>(n);
    cl.n_cells = cl.n_sites;
    cl.m11 = n; cl.m12 = 0; cl.m21 = 0; cl.m22 = 1;
    for (long i = 0; i < n; ++i) {
        cl.position.push_back(static_cast<double>(i) * spec.a1);
        cl.cell.push_back({i, 0, 0});
    }
    std::vector<Edge> nn, nnn;
    for (long i = 0; i < n; ++i) {
        long j1 = (i + 1) % n, j2 = (i + 2) % n;
        nn.push_back({static_cast<int>(std::min(i, j1)), static_cast<int>(std::max(i, j1))});
        if (j2 != i) nnn.push_back({static_cast<int>(std::min(i, j2)), static_cast<int>(std::max(i, j2))});
    }
    auto dedupe = [](std::vector<Edge>& es) {
        std::sort(es.begin(), es.end());
        es.erase(std::unique(es.begin(), es.end()), es.end());
    };
    dedupe(nn);
    dedupe(nnn);
    cl.edges_nn = nn;
    cl.edges_nnn = nnn;
    double a = norm2(spec.a1);
    cl.shell_nn = a;
    cl.shell_nnn = 4.0 * a;
    return cl;
}

} // namespace detail

inline Cluster build_cluster(const ClusterSpec& spec) {
    if (spec.kind == LatticeKind::Chain) {
        Cluster cl = detail::build_chain(spec);
        if (spec.expected_sites >= 0 && cl.n_sites != spec.expected_sites) {
            std::ostringstream os;
            os << "cluster has " << cl.n_sites << " sites, expected " << spec.expected_sites;
            throw SiteCountMismatch(os.str());
        }
        return cl;
    }

    const Vec2 a1 = spec.a1, a2 = spec.a2, b1 = spec.b1, b2 = spec.b2;
    const double detA = a1.x * a2.y - a2.x * a1.y;
    if (std::abs(detA) < 1e-12) throw NonCommensurate("primitive vectors are degenerate");

    // torus spans in cell coordinates: columns of M = A^-1 [b1 b2]
    auto solve = [&](Vec2 b) -> std::array<double, 2> {
        return {(b.x * a2.y - a2.x * b.y) / detA, (a1.x * b.y - b.x * a1.y) / detA};
    };
    const auto c1 = solve(b1), c2 = solve(b2);
    const double vals[4] = {c1[0], c2[0], c1[1], c2[1]};
    long m[4];
    for (int k = 0; k < 4; ++k) {
        m[k] = std::lround(vals[k]);
        if (std::abs(vals[k] - static_cast<double>(m[k])) > detail::kIntTol) {
            std::ostringstream os;
            os << "torus span is not an integer combination of primitive vectors"
               << " (A^-1 B entry " << vals[k] << ")";
            throw NonCommensurate(os.str());
        }
    }
    detail::CellReducer red(m[0], m[1], m[2], m[3]);

    // enumerate distinct cells; box of width 2R+1 covers every residue class
    const long R = std::llabs(m[0]) + std::llabs(m[1]) + std::llabs(m[2]) + std::llabs(m[3]);
    std::vector<std::array<long, 2>> cells;
    for (long n1 = -R; n1 <= R; ++n1)
        for (long n2 = -R; n2 <= R; ++n2) {
            auto rep = red.reduce(n1, n2);
            if (std::find(cells.begin(), cells.end(), rep) == cells.end()) cells.push_back(rep);
        }
    std::sort(cells.begin(), cells.end());
    check(static_cast<long>(cells.size()) == red.det, "cell enumeration does not match det");

    const std::vector<Vec2> basis = spec.basis.empty() ? detail::default_basis(spec.kind) : spec.basis;

    Cluster cl;
    cl.spec = spec;
    cl.spec.basis = basis;
    cl.n_cells = static_cast<int>(cells.size());
    cl.m11 = m[0]; cl.m12 = m[1]; cl.m21 = m[2]; cl.m22 = m[3];
    for (const auto& c : cells)
        for (std::size_t b = 0; b < basis.size(); ++b) {
            cl.position.push_back(static_cast<double>(c[0]) * a1 +
                                  static_cast<double>(c[1]) * a2 + basis[b]);
            cl.cell.push_back({c[0], c[1], static_cast<long>(b)});
        }
    cl.n_sites = static_cast<int>(cl.position.size());
    if (spec.expected_sites >= 0 && cl.n_sites != spec.expected_sites) {
        std::ostringstream os;
        os << "cluster has " << cl.n_sites << " sites, expected " << spec.expected_sites;
        throw SiteCountMismatch(os.str());
    }

    // minimum-image pair distances over the 3x3 block of torus copies
    const int n = cl.n_sites;
    std::vector<double> dist2(static_cast<std::size_t>(n) * n, 0.0);
    double d1 = 1e300, d2 = 1e300;  // two smallest distinct squared distances
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double dmin = 1e300;
            for (int k1 = -1; k1 <= 1; ++k1)
                for (int k2 = -1; k2 <= 1; ++k2) {
                    Vec2 d = cl.position[i] - cl.position[j] +
                             static_cast<double>(k1) * b1 + static_cast<double>(k2) * b2;
                    dmin = std::min(dmin, norm2(d));
                }
            dist2[static_cast<std::size_t>(i) * n + j] = dmin;
            if (dmin < d1 - detail::kShellTol) {
                d2 = d1;
                d1 = dmin;
            } else if (dmin > d1 + detail::kShellTol && dmin < d2 - detail::kShellTol) {
                d2 = dmin;
            }
        }
    check(d2 < 1e299, "fewer than two distance shells");
    check(d2 - d1 > 1e-9, "NN and NNN shells are not separated");
    cl.shell_nn = d1;
    cl.shell_nnn = d2;

    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = dist2[static_cast<std::size_t>(i) * n + j];
            if (std::abs(d - d1) <= detail::kShellTol) cl.edges_nn.push_back({i, j});
            else if (std::abs(d - d2) <= detail::kShellTol) cl.edges_nnn.push_back({i, j});
        }

    // NN coordination is fixed per lattice kind; a torus too small to keep
    // neighbors distinct shows up here rather than as silent double bonds
    const int want = detail::expected_coordination(spec.kind);
    std::vector<int> deg(n, 0);
    for (const auto& e : cl.edges_nn) {
        ++deg[e.i];
        ++deg[e.j];
    }
    for (int i = 0; i < n; ++i)
        if (deg[i] != want) {
            std::ostringstream os;
            os << to_string(spec.kind) << " cluster: site " << i << " has NN coordination "
               << deg[i] << ", expected " << want;
            throw Error(os.str());
        }
    return cl;
}

// ---------------------------------------------------------------------------
// sublattice encodings

struct SublatticeEncoding {
    SublatticePattern pattern = SublatticePattern::None;
    int n_classes = 0;               // one-hot width
    std::vector<int> code;           // class index per site, empty iff None
};

namespace detail {

inline long pmod(long x, long m) { return ((x % m) + m) % m; }

// class index from integer cell coordinates; geometry conventions for the
// patterns whose enlarged cells are not fixed by symmetry alone
inline int pattern_class(SublatticePattern p, LatticeKind k, long n1, long n2, long b) {
    switch (p) {
        case SublatticePattern::Neel:
            return static_cast<int>(k == LatticeKind::Chain ? pmod(n1, 2) : pmod(n1 + n2, 2));
        case SublatticePattern::Orthogonal:
        case SublatticePattern::Tetrahedral:
            return static_cast<int>(pmod(n1, 2) + 2 * pmod(n2, 2));
        case SublatticePattern::AF:
            return static_cast<int>(b);
        case SublatticePattern::Cubic:
            return static_cast<int>(b + 2 * pmod(n1 + n2, 2));
        case SublatticePattern::Coplanar:
            return static_cast<int>(pmod(n1 - n2, 3));
        case SublatticePattern::QZero:
            return static_cast<int>(b);
        case SublatticePattern::RootThree:
            return static_cast<int>(b * 3 + pmod(n1 - n2, 3));
        default:
            return 0;
    }
}

inline int pattern_width(SublatticePattern p) {
    switch (p) {
        case SublatticePattern::None: return 0;
        case SublatticePattern::Neel: return 2;
        case SublatticePattern::Orthogonal: return 4;
        case SublatticePattern::AF: return 2;
        case SublatticePattern::Cubic: return 4;
        case SublatticePattern::Coplanar: return 3;
        case SublatticePattern::Tetrahedral: return 4;
        case SublatticePattern::QZero: return 3;
        case SublatticePattern::RootThree: return 9;
        case SublatticePattern::Custom: return -1;
    }
    return 0;
}

inline bool pattern_matches_kind(SublatticePattern p, LatticeKind k) {
    switch (p) {
        case SublatticePattern::None:
        case SublatticePattern::Custom:
            return true;
        case SublatticePattern::Neel:
            return k == LatticeKind::Square || k == LatticeKind::Chain;
        case SublatticePattern::Orthogonal:
            return k == LatticeKind::Square;
        case SublatticePattern::AF:
        case SublatticePattern::Cubic:
            return k == LatticeKind::Honeycomb;
        case SublatticePattern::Coplanar:
        case SublatticePattern::Tetrahedral:
            return k == LatticeKind::Triangular;
        case SublatticePattern::QZero:
        case SublatticePattern::RootThree:
            return k == LatticeKind::Kagome;
    }
    return false;
}

} // namespace detail

inline SublatticeEncoding assign_sublattice(const Cluster& cl, SublatticePattern p,
                                            const std::vector<int>* custom = nullptr) {
    SublatticeEncoding enc;
    enc.pattern = p;
    if (p == SublatticePattern::None) return enc;

    if (p == SublatticePattern::Custom) {
        check(custom != nullptr, "custom pattern requires a code map");
        if (static_cast<int>(custom->size()) != cl.n_sites)
            throw LengthMismatch("custom code map length does not match site count");
        int k = 0;
        for (int c : *custom) {
            if (c < 0) throw PatternIncompatible("custom code map has negative class");
            k = std::max(k, c + 1);
        }
        enc.n_classes = k;
        enc.code = *custom;
        return enc;
    }

    if (!detail::pattern_matches_kind(p, cl.spec.kind))
        throw PatternIncompatible("pattern " + to_string(p) + " is not defined on " +
                                  to_string(cl.spec.kind));

    // the class function lives on Z^2 x basis; it is usable on the torus only
    // if adding either torus generator leaves every class unchanged
    const std::array<std::array<long, 2>, 2> gens = {{{cl.m11, cl.m21}, {cl.m12, cl.m22}}};
    for (const auto& g : gens)
        for (const auto& c : cl.cell) {
            int here = detail::pattern_class(p, cl.spec.kind, c[0], c[1], c[2]);
            int there = detail::pattern_class(p, cl.spec.kind, c[0] + g[0], c[1] + g[1], c[2]);
            if (here != there) {
                std::ostringstream os;
                os << "pattern " << to_string(p) << " is incompatible with the torus span ("
                   << g[0] << "," << g[1] << ")";
                throw PatternIncompatible(os.str());
            }
        }

    enc.n_classes = detail::pattern_width(p);
    enc.code.resize(cl.n_sites);
    for (int i = 0; i < cl.n_sites; ++i) {
        const auto& c = cl.cell[i];
        enc.code[i] = detail::pattern_class(p, cl.spec.kind, c[0], c[1], c[2]);
    }
    return enc;
}

// ---------------------------------------------------------------------------
// torus translation group

// One permutation per cell shift; perm[i] is the image of site i.
inline std::vector<std::vector<int>> translations(const Cluster& cl) {
    detail::CellReducer red(cl.m11, cl.m12, cl.m21, cl.m22);
    const long nb = cl.n_sites / cl.n_cells;  // basis size

    // canonical cell list in the same order build_cluster used
    std::vector<std::array<long, 2>> cells;
    cells.reserve(cl.n_cells);
    for (int i = 0; i < cl.n_sites; i += nb) cells.push_back({cl.cell[i][0], cl.cell[i][1]});

    std::map<std::array<long, 2>, int> cell_index;
    for (int c = 0; c < static_cast<int>(cells.size()); ++c) cell_index[cells[c]] = c;

    std::vector<std::vector<int>> perms;
    perms.reserve(cl.n_cells);
    for (const auto& t : cells) {
        std::vector<int> perm(cl.n_sites);
        for (int i = 0; i < cl.n_sites; ++i) {
            auto rep = red.reduce(cl.cell[i][0] + t[0], cl.cell[i][1] + t[1]);
            auto it = cell_index.find(rep);
            check(it != cell_index.end(), "translation left the cell list");
            perm[i] = static_cast<int>(it->second * nb + cl.cell[i][2]);
        }
        perms.push_back(std::move(perm));
    }
    return perms;
}

// ---------------------------------------------------------------------------
// presets

inline Cluster make_preset(const std::string& name) {
    const double r3 = std::sqrt(3.0);
    ClusterSpec s;

    auto span = [&](double p, double q, double r, double t) {
        s.b1 = p * s.a1 + q * s.a2;
        s.b2 = r * s.a1 + t * s.a2;
    };

    if (name.rfind("chain", 0) == 0) {
        long n = std::strtol(name.c_str() + 5, nullptr, 10);
        if (n < 4 || n % 2 != 0) throw UnknownPreset("chain presets need an even length >= 4: " + name);
        s.kind = LatticeKind::Chain;
        s.a1 = {1.0, 0.0};
        s.a2 = {0.0, 1.0};
        s.b1 = {static_cast<double>(n), 0.0};
        s.b2 = {0.0, 1.0};
        s.expected_sites = static_cast<int>(n);
        return build_cluster(s);
    }

    if (name.rfind("square", 0) == 0) {
        s.kind = LatticeKind::Square;
        s.a1 = {1.0, 0.0};
        s.a2 = {0.0, 1.0};
        if (name == "square16") { span(4, 0, 0, 4); s.expected_sites = 16; }
        else if (name == "square36") { span(6, 0, 0, 6); s.expected_sites = 36; }
        else if (name == "square64") { span(8, 0, 0, 8); s.expected_sites = 64; }
        else if (name == "square100") { span(10, 0, 0, 10); s.expected_sites = 100; }
        else throw UnknownPreset("unknown preset: " + name);
        return build_cluster(s);
    }

    if (name.rfind("honeycomb", 0) == 0) {
        s.kind = LatticeKind::Honeycomb;
        s.a1 = {r3 / 2.0, 1.5};
        s.a2 = {r3 / 2.0, -1.5};
        if (name == "honeycomb8") { span(2, 0, 0, 2); s.expected_sites = 8; }
        else if (name == "honeycomb32") { span(4, 0, 0, 4); s.expected_sites = 32; }
        else if (name == "honeycomb98") { span(7, 0, 0, 7); s.expected_sites = 98; }
        else throw UnknownPreset("unknown preset: " + name);
        return build_cluster(s);
    }

    if (name.rfind("triangular", 0) == 0) {
        s.kind = LatticeKind::Triangular;
        s.a1 = {1.0, 0.0};
        s.a2 = {0.5, r3 / 2.0};
        if (name == "triangular36") { span(6, 0, 0, 6); s.expected_sites = 36; }
        else if (name == "triangular48") { span(4, 4, 8, -4); s.expected_sites = 48; }
        else if (name == "triangular108") { span(6, 6, 12, -6); s.expected_sites = 108; }
        else throw UnknownPreset("unknown preset: " + name);
        return build_cluster(s);
    }

    if (name.rfind("kagome", 0) == 0) {
        s.kind = LatticeKind::Kagome;
        s.a1 = {1.0, 0.0};
        s.a2 = {0.5, r3 / 2.0};
        if (name == "kagome12") { span(2, 0, 0, 2); s.expected_sites = 12; }
        else if (name == "kagome36") { span(6, 0, 2, 2); s.expected_sites = 36; }
        else if (name == "kagome48") { span(4, 0, 0, 4); s.expected_sites = 48; }
        else if (name == "kagome108") { span(6, 0, 0, 6); s.expected_sites = 108; }
        else throw UnknownPreset("unknown preset: " + name);
        return build_cluster(s);
    }

    throw UnknownPreset("unknown preset: " + name);
}

// Default pattern for a lattice kind and frustration ratio, following the
// regime table (see README): the favored classical order switches with j2.
inline SublatticePattern default_pattern(LatticeKind kind, double j2) {
    switch (kind) {
        case LatticeKind::Chain: return SublatticePattern::Neel;
        case LatticeKind::Square:
            return j2 <= 0.5 ? SublatticePattern::Neel : SublatticePattern::Orthogonal;
        case LatticeKind::Honeycomb:
            return j2 <= 0.5 ? SublatticePattern::AF : SublatticePattern::Cubic;
        case LatticeKind::Triangular:
            return j2 <= 0.14 ? SublatticePattern::Coplanar : SublatticePattern::Tetrahedral;
        case LatticeKind::Kagome:
            return j2 >= 0.0 ? SublatticePattern::QZero : SublatticePattern::RootThree;
    }
    return SublatticePattern::None;
}

} // namespace gvmc
