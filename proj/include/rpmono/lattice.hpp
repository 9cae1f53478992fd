#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpmono::lattice {

using Vertex = int;

enum class EdgeConvention {
    simple,  // each unordered pair {x, x+e_i} carried once (sides >= 4)
    doubled  // sides of length 2 carry two parallel edges per pair
};

struct Edge {
    Vertex u;
    Vertex v;
    int dir;
};

/// Even torus Z^d / (L_1 Z x ... x L_d Z). The canonical geometry is cubic,
/// L_1 = ... = L_d; rectangular sides are supported as an engine-level
/// generalization for small oracle systems and flagged `non_paper_geometry`.
///
/// Vertex indices enumerate coordinate tuples lexicographically (first
/// coordinate slowest). Edges are generated as (x, x + e_i) for every vertex
/// and direction; for a direction of length 2 under the doubled convention
/// this yields two distinct parallel edges per neighbouring pair, preserving
/// coordination number 2d.
class TorusGeometry {
public:
    TorusGeometry() = default;

    TorusGeometry(std::vector<int> sides, EdgeConvention convention)
        : sides_(std::move(sides)), convention_(convention) {
        if (sides_.empty())
            throw std::invalid_argument("torus dimension must be >= 1");
        for (int l : sides_) {
            if (l < 2 || l % 2 != 0)
                throw std::invalid_argument(
                    "L must be even and >= 2 (torus side " + std::to_string(l) + ")");
        }
        if (convention_ == EdgeConvention::doubled &&
            std::none_of(sides_.begin(), sides_.end(), [](int l) { return l == 2; }))
            throw std::invalid_argument("doubled convention applies only to sides of length 2");

        const int d = dim();
        strides_.assign(d, 1);
        for (int i = d - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * sides_[i + 1];
        n_ = strides_[0] * sides_[0];

        for (int i = 0; i < d; ++i) {
            const bool both_dirs = sides_[i] == 2 && convention_ == EdgeConvention::simple;
            for (Vertex x = 0; x < n_; ++x) {
                if (both_dirs && coord(x, i) == 1) continue;  // one edge per pair
                edges_.push_back({x, neighbour(x, i, +1), i});
            }
        }
        incident_.resize(n_);
        for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
            incident_[edges_[e].u].push_back(e);
            incident_[edges_[e].v].push_back(e);
        }
        for (auto& list : incident_) std::sort(list.begin(), list.end());
    }

    int dim() const { return static_cast<int>(sides_.size()); }
    const std::vector<int>& sides() const { return sides_; }
    int side(int i) const { return sides_[i]; }
    bool is_cubic() const {
        return std::all_of(sides_.begin(), sides_.end(), [&](int l) { return l == sides_[0]; });
    }
    /// Cubic side length L; throws for rectangular tori.
    int length() const {
        if (!is_cubic()) throw std::logic_error("rectangular torus has no single L");
        return sides_[0];
    }
    EdgeConvention convention() const { return convention_; }
    bool has_doubled_edges() const {
        return convention_ == EdgeConvention::doubled &&
               std::any_of(sides_.begin(), sides_.end(), [](int l) { return l == 2; });
    }
    bool non_paper_geometry() const { return !is_cubic() || dim() < 2; }

    int vertex_count() const { return n_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<int>& incident_edges(Vertex x) const { return incident_[x]; }

    int coord(Vertex x, int i) const { return (x / strides_[i]) % sides_[i]; }

    std::vector<int> coords(Vertex x) const {
        std::vector<int> c(dim());
        for (int i = 0; i < dim(); ++i) c[i] = coord(x, i);
        return c;
    }

    Vertex vertex(const std::vector<int>& c) const {
        Vertex x = 0;
        for (int i = 0; i < dim(); ++i) {
            int ci = ((c[i] % sides_[i]) + sides_[i]) % sides_[i];
            x += ci * strides_[i];
        }
        return x;
    }

    Vertex neighbour(Vertex x, int i, int step) const {
        int ci = coord(x, i);
        int ni = ((ci + step) % sides_[i] + sides_[i]) % sides_[i];
        return x + (ni - ci) * strides_[i];
    }

    Vertex origin() const { return 0; }

    Vertex translate(Vertex x, Vertex z) const {
        Vertex r = 0;
        for (int i = 0; i < dim(); ++i)
            r += ((coord(x, i) + coord(z, i)) % sides_[i]) * strides_[i];
        return r;
    }

    Vertex negate(Vertex x) const {
        Vertex r = 0;
        for (int i = 0; i < dim(); ++i)
            r += ((sides_[i] - coord(x, i)) % sides_[i]) * strides_[i];
        return r;
    }

    /// |x . e_i| in the symmetric representative (-L/2, L/2].
    int abs_coord(Vertex x, int i) const {
        int c = coord(x, i);
        return std::min(c, sides_[i] - c);
    }

private:
    std::vector<int> sides_;
    EdgeConvention convention_ = EdgeConvention::simple;
    std::vector<int> strides_;
    int n_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> incident_;
};

inline TorusGeometry build_torus(std::vector<int> sides) {
    bool has2 = std::any_of(sides.begin(), sides.end(), [](int l) { return l == 2; });
    return TorusGeometry(std::move(sides),
                         has2 ? EdgeConvention::doubled : EdgeConvention::simple);
}

inline TorusGeometry build_torus(int d, int L) {
    if (d < 1) throw std::invalid_argument("torus dimension must be >= 1");
    return build_torus(std::vector<int>(static_cast<std::size_t>(d), L));
}

inline TorusGeometry build_torus(int d, int L, EdgeConvention convention) {
    if (d < 1) throw std::invalid_argument("torus dimension must be >= 1");
    return TorusGeometry(std::vector<int>(static_cast<std::size_t>(d), L), convention);
}

enum class ReflectionKind { through_edges, through_vertices };

/// Reflection x_i -> 2m - x_i (mod L_i) in a plane orthogonal to axis i.
/// The offset m is a half-integer stored exactly as 2m.
struct Reflection {
    int axis = 0;
    int twice_offset = 1;  // 2m in [0, 2L)

    ReflectionKind kind() const {
        return twice_offset % 2 == 0 ? ReflectionKind::through_vertices
                                     : ReflectionKind::through_edges;
    }
    static Reflection through_edge(int axis, int lower_coord) {
        return {axis, 2 * lower_coord + 1};
    }
    static Reflection through_vertex(int axis, int coord) { return {axis, 2 * coord}; }
};

inline Vertex reflect_vertex(const TorusGeometry& g, const Reflection& r, Vertex x) {
    const int L = g.side(r.axis);
    int c = g.coord(x, r.axis);
    int rc = ((r.twice_offset - c) % L + L) % L;
    auto cs = g.coords(x);
    cs[r.axis] = rc;
    return g.vertex(cs);
}

/// Dense membership set over the vertices of one geometry.
class VertexSet {
public:
    VertexSet() = default;
    explicit VertexSet(const TorusGeometry& g)
        : g_(&g), member_(static_cast<std::size_t>(g.vertex_count()), 0) {}

    static VertexSet full(const TorusGeometry& g) {
        VertexSet s(g);
        std::fill(s.member_.begin(), s.member_.end(), 1);
        return s;
    }

    const TorusGeometry& geometry() const { return *g_; }
    bool contains(Vertex x) const { return member_[static_cast<std::size_t>(x)] != 0; }
    void insert(Vertex x) { member_[static_cast<std::size_t>(x)] = 1; }
    void erase(Vertex x) { member_[static_cast<std::size_t>(x)] = 0; }

    int size() const {
        return static_cast<int>(std::accumulate(member_.begin(), member_.end(), 0));
    }

    VertexSet complement() const {
        VertexSet s(*g_);
        for (std::size_t i = 0; i < member_.size(); ++i) s.member_[i] = member_[i] ? 0 : 1;
        return s;
    }

    VertexSet reflected(const Reflection& r) const {
        VertexSet s(*g_);
        for (Vertex x = 0; x < g_->vertex_count(); ++x)
            if (contains(x)) s.insert(reflect_vertex(*g_, r, x));
        return s;
    }

    VertexSet unite(const VertexSet& other) const {
        VertexSet s(*g_);
        for (std::size_t i = 0; i < member_.size(); ++i)
            s.member_[i] = (member_[i] || other.member_[i]) ? 1 : 0;
        return s;
    }

    VertexSet intersect(const VertexSet& other) const {
        VertexSet s(*g_);
        for (std::size_t i = 0; i < member_.size(); ++i)
            s.member_[i] = (member_[i] && other.member_[i]) ? 1 : 0;
        return s;
    }

    std::vector<Vertex> vertices() const {
        std::vector<Vertex> out;
        for (Vertex x = 0; x < g_->vertex_count(); ++x)
            if (contains(x)) out.push_back(x);
        return out;
    }

    /// Sorted coordinate tuples, the JSON serialization of the set.
    std::vector<std::vector<int>> sorted_coords() const {
        std::vector<std::vector<int>> out;
        for (Vertex x : vertices()) out.push_back(g_->coords(x));
        std::sort(out.begin(), out.end());
        return out;
    }

    bool operator==(const VertexSet& other) const { return member_ == other.member_; }

private:
    const TorusGeometry* g_ = nullptr;
    std::vector<std::uint8_t> member_;
};

/// Halves (T+, T-) exchanged by the reflection. For a reflection through
/// edges the exchange is exact; for a reflection through vertices the two
/// fixed hyperplanes are assigned to T+, so the sets are disjoint and
/// theta(T+) = T- together with the fixed vertices.
inline std::pair<VertexSet, VertexSet> reflection_halves(const TorusGeometry& g,
                                                         const Reflection& r) {
    const int L = g.side(r.axis);
    VertexSet plus(g), minus(g);
    for (Vertex x = 0; x < g.vertex_count(); ++x) {
        // distance of 2c from the plane 2m, folded onto [0, 2L)
        int c2 = 2 * g.coord(x, r.axis);
        int rel = ((c2 - r.twice_offset) % (2 * L) + 2 * L) % (2 * L);
        if (rel == 0 || rel == L)
            plus.insert(x);  // fixed hyperplanes (vertex reflections only)
        else if (rel < L)
            plus.insert(x);
        else
            minus.insert(x);
    }
    return {plus, minus};
}

/// Edge reflections Theta_1..Theta_k along a staircase path from the origin
/// to x: all steps in direction order[0], then order[1], ... Applying the
/// composite to the origin yields x; the composite is path-independent.
inline std::vector<Reflection> reflection_image(const TorusGeometry& g, Vertex x,
                                                const std::vector<int>& order) {
    std::vector<Reflection> seq;
    for (int i : order) {
        const int target = g.coord(x, i);
        for (int c = 0; c < target; ++c)
            seq.push_back(Reflection::through_edge(i, c));
    }
    return seq;
}

inline std::vector<Reflection> reflection_image(const TorusGeometry& g, Vertex x) {
    std::vector<int> order(static_cast<std::size_t>(g.dim()));
    std::iota(order.begin(), order.end(), 0);
    return reflection_image(g, x, order);
}

inline Vertex apply_reflections(const TorusGeometry& g, const std::vector<Reflection>& seq,
                                Vertex x) {
    for (const auto& r : seq) x = reflect_vertex(g, r, x);
    return x;
}

/// Corner box Q_z = {x : for all i, x_i <= |z_i| or x_i > L - |z_i|}.
inline VertexSet box_Q(const TorusGeometry& g, Vertex z) {
    VertexSet s(g);
    for (Vertex x = 0; x < g.vertex_count(); ++x) {
        bool in = true;
        for (int i = 0; i < g.dim(); ++i) {
            int zi = g.abs_coord(z, i);
            int xi = g.coord(x, i);
            if (!(xi <= zi || xi > g.side(i) - zi)) {
                in = false;
                break;
            }
        }
        if (in) s.insert(x);
    }
    return s;
}

/// Boundary shell S_{r,L} = {z : exists i with z_i < r or L - z_i <= r}.
/// Its complement is the centred box of side L - 2r.
inline VertexSet shell_S(const TorusGeometry& g, int r) {
    for (int i = 0; i < g.dim(); ++i)
        if (r < 0 || 2 * r > g.side(i))
            throw std::invalid_argument("shell radius must lie in [0, L/2]");
    VertexSet s(g);
    for (Vertex z = 0; z < g.vertex_count(); ++z) {
        for (int i = 0; i < g.dim(); ++i) {
            int zi = g.coord(z, i);
            if (zi < r || g.side(i) - zi <= r) {
                s.insert(z);
                break;
            }
        }
    }
    return s;
}

/// All dual momenta k = 2 pi n / L, n in {0..L-1}^d, lexicographic in n;
/// the first entry is k = 0.
inline std::vector<std::vector<double>> dual_momenta(const TorusGeometry& g) {
    constexpr double two_pi = 6.283185307179586476925287;
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(g.vertex_count()));
    for (Vertex x = 0; x < g.vertex_count(); ++x) {
        std::vector<double> k(static_cast<std::size_t>(g.dim()));
        for (int i = 0; i < g.dim(); ++i)
            k[static_cast<std::size_t>(i)] = two_pi * g.coord(x, i) / g.side(i);
        out.push_back(std::move(k));
    }
    return out;
}

} // namespace rpmono::lattice
