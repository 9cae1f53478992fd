#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rpmono/lattice.hpp"
#include "rpmono/two_point_table.hpp"

namespace rpmono::rpm {

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-vertex statistics of a configuration: u[i] unpaired links of colour i,
/// v[i] same-colour pairings (zeroed when any cross-colour pairing exists),
/// K cross-colour pairings, n partition elements, t pairings between links
/// on the same edge.
struct LocalStats {
    std::vector<int> unpaired;    // u, indexed by colour-1
    std::vector<int> same_pairs;  // v
    int cross_pairs = 0;          // K
    int elements = 0;             // n
    int same_edge_pairs = 0;      // t

    explicit LocalStats(int n_colours = 0)
        : unpaired(static_cast<std::size_t>(n_colours), 0),
          same_pairs(static_cast<std::size_t>(n_colours), 0) {}

    int total_unpaired() const {
        int s = 0;
        for (int x : unpaired) s += x;
        return s;
    }
};

/// Vertex weight function U >= 0. Presets realize the two settings of the
/// source model: loop_on keeps pairings monochromatic, crossing_on admits one
/// cross-colour pairing per vertex. Both give weight to patterns with up to
/// two unpaired link ends so the worm chain can travel through walk states;
/// the loops-only restrictions live in the partition-function and observable
/// sector definitions, not in U.
struct WeightFunctionSpec {
    std::string name = "user";
    std::function<double(const LocalStats&)> eval;

    double operator()(const LocalStats& s) const { return eval(s); }

    static WeightFunctionSpec loop_on(int /*n_colours*/) {
        WeightFunctionSpec w;
        w.name = "loop_on";
        w.eval = [](const LocalStats& s) {
            if (s.cross_pairs != 0) return 0.0;
            if (s.total_unpaired() > 2) return 0.0;
            return 1.0;
        };
        return w;
    }

    /// Disjoint-loop sector (at most one pairing per vertex) with same-colour
    /// pairings weighted N^{-1/2}. Under this weight a loop through o and x
    /// with two differently coloured arcs carries exactly N(N-1) colourings
    /// against N for the monochromatic loop, with the pairing weights
    /// cancelling the length dependence, so G = 2 C(N,2) P(o <-> x) holds
    /// configuration by configuration.
    static WeightFunctionSpec crossing_on(int n_colours) {
        WeightFunctionSpec w;
        w.name = "crossing_on";
        const double same_pair_weight = 1.0 / std::sqrt(static_cast<double>(n_colours));
        w.eval = [same_pair_weight](const LocalStats& s) {
            if (s.cross_pairs > 1) return 0.0;
            if (s.total_unpaired() > 2) return 0.0;
            const int pairs = s.elements - s.total_unpaired();
            if (pairs > 1) return 0.0;
            int vsum = 0;
            for (int v : s.same_pairs) vsum += v;
            double acc = 1.0;
            for (int k = 0; k < vsum; ++k) acc *= same_pair_weight;
            return acc;
        };
        return w;
    }
};

struct RPMParams {
    lattice::TorusGeometry geometry;
    int n_colours = 1;
    double beta = 1.0;
    WeightFunctionSpec weight = WeightFunctionSpec::loop_on(1);
    int m_max = 1;
};

/// A link is one of the m_e parallel strands on an edge.
struct LinkRef {
    int edge = -1;
    int index = 0;
    bool operator==(const LinkRef& o) const { return edge == o.edge && index == o.index; }
    bool operator<(const LinkRef& o) const {
        return edge != o.edge ? edge < o.edge : index < o.index;
    }
};

/// Configuration triple (m, c, pi): link counts and colours per edge, plus a
/// per-vertex partition of incident link ends into pairs and singletons.
/// Local slots at a vertex enumerate incident links grouped by ascending
/// edge id; partner[v][slot] is the paired slot or -1.
struct PathConfig {
    const lattice::TorusGeometry* g = nullptr;
    std::vector<std::vector<std::uint8_t>> colours;  // per edge, one entry per link, 1..N
    std::vector<std::vector<int>> partner;           // per vertex, involution with -1 holes

    explicit PathConfig(const lattice::TorusGeometry& geom)
        : g(&geom),
          colours(static_cast<std::size_t>(geom.edge_count())),
          partner(static_cast<std::size_t>(geom.vertex_count())) {}

    int m(int edge) const { return static_cast<int>(colours[static_cast<std::size_t>(edge)].size()); }

    int total_links() const {
        int s = 0;
        for (const auto& c : colours) s += static_cast<int>(c.size());
        return s;
    }

    /// first local slot of edge `e` at vertex `v`
    int slot_base(int v, int e) const {
        int base = 0;
        for (int ie : g->incident_edges(v)) {
            if (ie == e) return base;
            base += m(ie);
        }
        throw std::logic_error("edge not incident to vertex");
    }

    LinkRef slot_link(int v, int slot) const {
        int base = 0;
        for (int ie : g->incident_edges(v)) {
            const int cnt = m(ie);
            if (slot < base + cnt) return {ie, slot - base};
            base += cnt;
        }
        throw std::logic_error("slot out of range");
    }

    int link_slot(int v, const LinkRef& l) const { return slot_base(v, l.edge) + l.index; }

    int degree(int v) const {
        int base = 0;
        for (int ie : g->incident_edges(v)) base += m(ie);
        return base;
    }

    std::uint8_t colour(const LinkRef& l) const {
        return colours[static_cast<std::size_t>(l.edge)][static_cast<std::size_t>(l.index)];
    }
};

inline LocalStats local_stats(const PathConfig& w, int x, int n_colours) {
    LocalStats st(n_colours);
    const auto& part = w.partner[static_cast<std::size_t>(x)];
    for (int slot = 0; slot < static_cast<int>(part.size()); ++slot) {
        const LinkRef l = w.slot_link(x, slot);
        const int c = w.colour(l) - 1;
        const int p = part[static_cast<std::size_t>(slot)];
        if (p < 0) {
            st.unpaired[static_cast<std::size_t>(c)] += 1;
            st.elements += 1;
        } else if (p > slot) {
            const LinkRef l2 = w.slot_link(x, p);
            const int c2 = w.colour(l2) - 1;
            if (c == c2)
                st.same_pairs[static_cast<std::size_t>(c)] += 1;
            else
                st.cross_pairs += 1;
            if (l.edge == l2.edge) st.same_edge_pairs += 1;
            st.elements += 1;
        }
    }
    if (st.cross_pairs != 0)
        std::fill(st.same_pairs.begin(), st.same_pairs.end(), 0);
    return st;
}

/// mu(w) = prod_e beta^{m_e} / m_e!  *  prod_x U_x(w)
inline double config_weight(const PathConfig& w, const RPMParams& p) {
    double acc = 1.0;
    for (int e = 0; e < p.geometry.edge_count(); ++e) {
        const int me = w.m(e);
        for (int k = 1; k <= me; ++k) acc *= p.beta / k;
    }
    for (int x = 0; x < p.geometry.vertex_count(); ++x) {
        acc *= p.weight(local_stats(w, x, p.n_colours));
        if (acc == 0.0) return 0.0;
    }
    return acc;
}

struct Walk {
    int from = -1;
    int to = -1;
    std::vector<LinkRef> links;
};

struct LoopDecomposition {
    std::vector<std::vector<LinkRef>> loops;
    std::vector<Walk> walks;
};

/// Follows pairings link to link. Walks start from unpaired ends (smallest
/// (vertex, slot) first); remaining links form loops, each starting from its
/// lexicographically smallest link.
inline LoopDecomposition trace_loops(const PathConfig& w) {
    const auto& g = *w.g;
    LoopDecomposition out;
    std::vector<std::vector<char>> visited(static_cast<std::size_t>(g.edge_count()));
    for (int e = 0; e < g.edge_count(); ++e)
        visited[static_cast<std::size_t>(e)].assign(static_cast<std::size_t>(w.m(e)), 0);

    auto other_end = [&](const LinkRef& l, int v) {
        const auto& ed = g.edges()[static_cast<std::size_t>(l.edge)];
        return ed.u == v ? ed.v : ed.u;
    };
    auto mark = [&](const LinkRef& l) {
        visited[static_cast<std::size_t>(l.edge)][static_cast<std::size_t>(l.index)] = 1;
    };
    auto seen = [&](const LinkRef& l) {
        return visited[static_cast<std::size_t>(l.edge)][static_cast<std::size_t>(l.index)] != 0;
    };

    // walks
    for (int v = 0; v < g.vertex_count(); ++v) {
        const auto& part = w.partner[static_cast<std::size_t>(v)];
        for (int slot = 0; slot < static_cast<int>(part.size()); ++slot) {
            if (part[static_cast<std::size_t>(slot)] >= 0) continue;
            LinkRef l = w.slot_link(v, slot);
            if (seen(l)) continue;
            Walk walk;
            walk.from = v;
            int cur = v;
            for (;;) {
                mark(l);
                walk.links.push_back(l);
                const int nxt = other_end(l, cur);
                const int s2 = w.link_slot(nxt, l);
                const int p2 = w.partner[static_cast<std::size_t>(nxt)][static_cast<std::size_t>(s2)];
                if (p2 < 0) {
                    walk.to = nxt;
                    break;
                }
                l = w.slot_link(nxt, p2);
                cur = nxt;
            }
            out.walks.push_back(std::move(walk));
        }
    }

    // loops
    for (int e = 0; e < g.edge_count(); ++e) {
        for (int i = 0; i < w.m(e); ++i) {
            LinkRef start{e, i};
            if (seen(start)) continue;
            std::vector<LinkRef> loop;
            LinkRef l = start;
            int cur = g.edges()[static_cast<std::size_t>(e)].u;
            for (;;) {
                mark(l);
                loop.push_back(l);
                const int nxt = other_end(l, cur);
                const int s2 = w.link_slot(nxt, l);
                const int p2 = w.partner[static_cast<std::size_t>(nxt)][static_cast<std::size_t>(s2)];
                if (p2 < 0)
                    throw std::logic_error("unpaired end inside a loop trace");
                l = w.slot_link(nxt, p2);
                cur = nxt;
                if (l == start && cur == g.edges()[static_cast<std::size_t>(e)].u) break;
            }
            out.loops.push_back(std::move(loop));
        }
    }
    return out;
}

enum class TwoPointKind { spin_source, crossing };

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

namespace detail {

/// Sums over pairings of the links incident to one vertex, split by the
/// sector role the vertex can play.
struct PairingSums {
    double closed_k0 = 0.0;   // all ends paired, no cross pairing
    double closed_k1 = 0.0;   // all ends paired, exactly one cross pairing
    double closed_any = 0.0;  // all ends paired, any K
    double one_c1_open = 0.0; // exactly one unpaired end, of colour 1, K = 0
};

/// Links incident to a vertex during enumeration: (edge group, colour).
struct IncidentLink {
    int group;
    int colour;
};

inline void pairing_sums_rec(std::vector<IncidentLink>& links, std::vector<int>& partner,
                             int n_colours, const WeightFunctionSpec& weight, int allow_open,
                             PairingSums& out, std::uint64_t& budget_used) {
    int first = -1;
    for (int i = 0; i < static_cast<int>(partner.size()); ++i)
        if (partner[static_cast<std::size_t>(i)] == -2) {
            first = i;
            break;
        }
    if (first < 0) {
        ++budget_used;
        LocalStats st(n_colours);
        int open_colour = -1;
        for (int i = 0; i < static_cast<int>(partner.size()); ++i) {
            const int p = partner[static_cast<std::size_t>(i)];
            const auto& li = links[static_cast<std::size_t>(i)];
            if (p < 0) {
                st.unpaired[static_cast<std::size_t>(li.colour - 1)] += 1;
                st.elements += 1;
                open_colour = li.colour;
            } else if (p > i) {
                const auto& lj = links[static_cast<std::size_t>(p)];
                if (li.colour == lj.colour)
                    st.same_pairs[static_cast<std::size_t>(li.colour - 1)] += 1;
                else
                    st.cross_pairs += 1;
                if (li.group == lj.group) st.same_edge_pairs += 1;
                st.elements += 1;
            }
        }
        if (st.cross_pairs != 0) std::fill(st.same_pairs.begin(), st.same_pairs.end(), 0);
        const double uval = weight(st);
        if (uval == 0.0) return;
        const int open = st.total_unpaired();
        if (open == 0) {
            out.closed_any += uval;
            if (st.cross_pairs == 0) out.closed_k0 += uval;
            if (st.cross_pairs == 1) out.closed_k1 += uval;
        } else if (open == 1 && open_colour == 1) {
            out.one_c1_open += uval;
        }
        return;
    }
    // leave `first` unpaired (at most `allow_open` ends may stay open)
    int open_now = 0;
    for (int p : partner)
        if (p == -1) ++open_now;
    if (open_now < allow_open) {
        partner[static_cast<std::size_t>(first)] = -1;
        pairing_sums_rec(links, partner, n_colours, weight, allow_open, out, budget_used);
        partner[static_cast<std::size_t>(first)] = -2;
    }
    for (int j = first + 1; j < static_cast<int>(partner.size()); ++j) {
        if (partner[static_cast<std::size_t>(j)] != -2) continue;
        partner[static_cast<std::size_t>(first)] = j;
        partner[static_cast<std::size_t>(j)] = first;
        pairing_sums_rec(links, partner, n_colours, weight, allow_open, out, budget_used);
        partner[static_cast<std::size_t>(first)] = -2;
        partner[static_cast<std::size_t>(j)] = -2;
    }
}

inline PairingSums pairing_sums(const std::vector<IncidentLink>& links, int n_colours,
                                const WeightFunctionSpec& weight, std::uint64_t& budget_used) {
    PairingSums out;
    if (links.empty()) {
        LocalStats st(n_colours);
        const double uval = weight(st);
        out.closed_any = out.closed_k0 = uval;
        return out;
    }
    std::vector<IncidentLink> work(links);
    std::vector<int> partner(links.size(), -2);
    pairing_sums_rec(work, partner, n_colours, weight, 1, out, budget_used);
    return out;
}

/// Enumerates the K = 0, all-paired pairings of one vertex explicitly
/// (for the connectivity pass); each entry is a partner involution plus its
/// U weight.
struct ExplicitPairing {
    std::vector<int> partner;
    double weight = 0.0;
};

inline void explicit_k0_rec(const std::vector<IncidentLink>& links, std::vector<int>& partner,
                            int n_colours, const WeightFunctionSpec& weight,
                            std::vector<ExplicitPairing>& out) {
    int first = -1;
    for (int i = 0; i < static_cast<int>(partner.size()); ++i)
        if (partner[static_cast<std::size_t>(i)] == -2) {
            first = i;
            break;
        }
    if (first < 0) {
        LocalStats st(n_colours);
        for (int i = 0; i < static_cast<int>(partner.size()); ++i) {
            const int p = partner[static_cast<std::size_t>(i)];
            if (p > i) {
                const auto& li = links[static_cast<std::size_t>(i)];
                const auto& lj = links[static_cast<std::size_t>(p)];
                st.same_pairs[static_cast<std::size_t>(li.colour - 1)] += 1;
                if (li.group == lj.group) st.same_edge_pairs += 1;
                st.elements += 1;
            }
        }
        const double uval = weight(st);
        if (uval > 0.0) out.push_back({partner, uval});
        return;
    }
    for (int j = first + 1; j < static_cast<int>(partner.size()); ++j) {
        if (partner[static_cast<std::size_t>(j)] != -2) continue;
        if (links[static_cast<std::size_t>(first)].colour != links[static_cast<std::size_t>(j)].colour)
            continue;  // K = 0 sector
        partner[static_cast<std::size_t>(first)] = j;
        partner[static_cast<std::size_t>(j)] = first;
        explicit_k0_rec(links, partner, n_colours, weight, out);
        partner[static_cast<std::size_t>(first)] = -2;
        partner[static_cast<std::size_t>(j)] = -2;
    }
}

} // namespace detail

struct EnumerationResult {
    TwoPointTable table;
    double z_norm = 0.0;              // Z^loop or Z^mono
    double identity_rel_error = 0.0;  // crossing: max_x |G - 2 C(N,2) P| / scale
    std::uint64_t work_units = 0;
    double truncation_bound_per_edge = 0.0;  // sum_{m > m_max} beta^m / m!
};

/// Exhaustive two-point function. Enumerates link-and-colour assignments by
/// DFS over edges, closing vertices as soon as their last incident edge is
/// fixed; pairings are summed per closed vertex, split by sector role, and
/// memoized in a flat table indexed by the incident colour profile. Source
/// vertices are anchored at the origin, so branches whose defect pattern
/// cannot serve any requested quantity are pruned.
///
/// spin_source: G(o,x) = mu(one unpaired colour-1 link at o and at x, none
/// elsewhere) / Z^loop.
/// crossing:    G(o,x) = mu(K_o = K_x = 1, K = 0 elsewhere, no unpaired)
/// / Z^mono, plus the independent P(o <-> x) from explicitly resolved
/// monochromatic pairings.
inline EnumerationResult enumerate_two_point(const RPMParams& p, TwoPointKind kind,
                                             std::uint64_t budget = 1000000000ULL) {
    const auto& g = p.geometry;
    const int V = g.vertex_count();
    const int E = g.edge_count();
    const int N = p.n_colours;
    if (kind == TwoPointKind::crossing && N < 2)
        throw std::invalid_argument("crossing two-point function requires N >= 2");
    if (p.m_max < 0) throw std::invalid_argument("m_max must be >= 0");
    if (p.beta < 0.0) throw std::invalid_argument("beta must be >= 0");

    // DFS edge order: per-vertex grouping so most vertices close while the
    // frontier is narrow; torus wrap rows close last, which is unavoidable
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(E));
    {
        std::vector<std::vector<int>> by_u(static_cast<std::size_t>(V));
        for (int id = 0; id < E; ++id)
            by_u[static_cast<std::size_t>(g.edges()[static_cast<std::size_t>(id)].u)].push_back(id);
        for (int v = 0; v < V; ++v)
            for (int id : by_u[static_cast<std::size_t>(v)]) order.push_back(id);
    }
    std::vector<int> pos_of(static_cast<std::size_t>(E));
    for (int pos = 0; pos < E; ++pos)
        pos_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos;

    std::vector<int> close_at(static_cast<std::size_t>(V), -1);
    for (int v = 0; v < V; ++v)
        for (int e : g.incident_edges(v))
            close_at[static_cast<std::size_t>(v)] =
                std::max(close_at[static_cast<std::size_t>(v)], pos_of[static_cast<std::size_t>(e)]);
    std::vector<std::vector<int>> closes(static_cast<std::size_t>(E));
    for (int v = 0; v < V; ++v)
        closes[static_cast<std::size_t>(close_at[static_cast<std::size_t>(v)])].push_back(v);

    // per-edge states: all colour tuples with m <= m_max and their weights
    struct EdgeChoice {
        std::vector<std::uint8_t> colours;
        double weight;
    };
    std::vector<EdgeChoice> choices;
    {
        std::vector<std::uint8_t> cur;
        std::function<void(int, double)> gen = [&](int m, double w) {
            if (static_cast<int>(cur.size()) == m) {
                choices.push_back({cur, w});
                return;
            }
            for (int c = 1; c <= N; ++c) {
                cur.push_back(static_cast<std::uint8_t>(c));
                gen(m, w);
                cur.pop_back();
            }
        };
        double fact_w = 1.0;
        for (int m = 0; m <= p.m_max; ++m) {
            if (m > 0) fact_w *= p.beta / m;
            if (p.beta == 0.0 && m > 0) break;
            cur.clear();
            gen(m, fact_w);
        }
    }
    const int n_choices = static_cast<int>(choices.size());

    // uniform incidence structure: every vertex sees the same number of
    // incident edges on a torus, so one profile table serves all vertices
    const int coordination = static_cast<int>(g.incident_edges(0).size());
    for (int v = 1; v < V; ++v)
        if (static_cast<int>(g.incident_edges(v).size()) != coordination)
            throw std::logic_error("non-uniform torus incidence");

    double table_size_d = 1.0;
    for (int k = 0; k < coordination; ++k) table_size_d *= n_choices;
    if (table_size_d > 2e6)
        throw CapacityError("profile table too large; reduce m_max or N");
    const std::size_t table_size = static_cast<std::size_t>(table_size_d);

    std::uint64_t work = 0;

    // lazily filled pairing sums per incident colour profile
    std::vector<detail::PairingSums> sums_table(table_size);
    std::vector<char> sums_have(table_size, 0);
    std::vector<std::vector<detail::ExplicitPairing>> k0_table(table_size);
    std::vector<char> k0_have(table_size, 0);

    std::vector<int> edge_choice(static_cast<std::size_t>(E), 0);

    auto profile_key = [&](int v) {
        std::size_t key = 0;
        for (int e : g.incident_edges(v))
            key = key * static_cast<std::size_t>(n_choices) +
                  static_cast<std::size_t>(edge_choice[static_cast<std::size_t>(e)]);
        return key;
    };

    auto profile_links = [&](int v) {
        std::vector<detail::IncidentLink> links;
        int group = 0;
        for (int e : g.incident_edges(v)) {
            for (std::uint8_t c :
                 choices[static_cast<std::size_t>(edge_choice[static_cast<std::size_t>(e)])].colours)
                links.push_back({group, static_cast<int>(c)});
            ++group;
        }
        return links;
    };

    auto sums_for = [&](int v) -> const detail::PairingSums& {
        const std::size_t key = profile_key(v);
        if (!sums_have[key]) {
            sums_table[key] = detail::pairing_sums(profile_links(v), N, p.weight, work);
            sums_have[key] = 1;
        }
        return sums_table[key];
    };

    auto k0_for = [&](int v) -> const std::vector<detail::ExplicitPairing>& {
        const std::size_t key = profile_key(v);
        if (!k0_have[key]) {
            auto links = profile_links(v);
            std::vector<int> partner(links.size(), -2);
            detail::explicit_k0_rec(links, partner, N, p.weight, k0_table[key]);
            k0_have[key] = 1;
        }
        return k0_table[key];
    };

    std::vector<detail::PairingSums> sums(static_cast<std::size_t>(V));
    double z_norm = 0.0;
    std::vector<double> numerator(static_cast<std::size_t>(V), 0.0);
    std::vector<double> p_numerator(static_cast<std::size_t>(V), 0.0);

    // scratch for the connectivity pass
    const int max_links = E * std::max(p.m_max, 1);
    std::vector<int> link_base(static_cast<std::size_t>(E) + 1, 0);
    std::vector<int> slot_link_flat;  // per vertex: coordination * m_max slots
    const int max_slots = coordination * std::max(p.m_max, 1);
    slot_link_flat.assign(static_cast<std::size_t>(V) * static_cast<std::size_t>(max_slots), -1);
    std::vector<int> uf_parent(static_cast<std::size_t>(max_links));
    std::vector<const std::vector<detail::ExplicitPairing>*> options(static_cast<std::size_t>(V));
    std::vector<int> multi_vertices;

    auto uf_find = [&](int a) {
        while (uf_parent[static_cast<std::size_t>(a)] != a) {
            uf_parent[static_cast<std::size_t>(a)] =
                uf_parent[static_cast<std::size_t>(uf_parent[static_cast<std::size_t>(a)])];
            a = uf_parent[static_cast<std::size_t>(a)];
        }
        return a;
    };

    const bool want_connectivity = kind == TwoPointKind::crossing;

    // accumulate P(o <-> x) over all monochromatic pairings of one leaf
    auto connectivity_pass = [&](double leaf_weight) {
        bool origin_occupied = false;
        for (int e : g.incident_edges(0))
            if (!choices[static_cast<std::size_t>(edge_choice[static_cast<std::size_t>(e)])]
                     .colours.empty())
                origin_occupied = true;
        if (!origin_occupied) return;

        int n_links = 0;
        for (int e = 0; e < E; ++e) {
            link_base[static_cast<std::size_t>(e)] = n_links;
            n_links += static_cast<int>(
                choices[static_cast<std::size_t>(edge_choice[static_cast<std::size_t>(e)])]
                    .colours.size());
        }
        link_base[static_cast<std::size_t>(E)] = n_links;

        multi_vertices.clear();
        double fixed_weight = leaf_weight;
        for (int v = 0; v < V; ++v) {
            options[static_cast<std::size_t>(v)] = &k0_for(v);
            const auto& opt = *options[static_cast<std::size_t>(v)];
            if (opt.empty()) return;  // no monochromatic resolution at v
            if (opt.size() == 1)
                fixed_weight *= opt[0].weight;
            else
                multi_vertices.push_back(v);
            int slot = 0;
            for (int e : g.incident_edges(v)) {
                const int me = static_cast<int>(
                    choices[static_cast<std::size_t>(edge_choice[static_cast<std::size_t>(e)])]
                        .colours.size());
                for (int i = 0; i < me; ++i) {
                    slot_link_flat[static_cast<std::size_t>(v) * static_cast<std::size_t>(max_slots) +
                                   static_cast<std::size_t>(slot)] =
                        link_base[static_cast<std::size_t>(e)] + i;
                    ++slot;
                }
            }
            for (; slot < max_slots; ++slot)
                slot_link_flat[static_cast<std::size_t>(v) * static_cast<std::size_t>(max_slots) +
                               static_cast<std::size_t>(slot)] = -1;
        }

        std::vector<int> pick(static_cast<std::size_t>(V), 0);
        std::function<void(std::size_t, double)> rec = [&](std::size_t mi, double wacc) {
            if (mi == multi_vertices.size()) {
                if (++work > budget) throw CapacityError("enumeration budget exceeded");
                for (int i = 0; i < n_links; ++i) uf_parent[static_cast<std::size_t>(i)] = i;
                for (int v = 0; v < V; ++v) {
                    const auto& pr =
                        (*options[static_cast<std::size_t>(v)])[static_cast<std::size_t>(
                            pick[static_cast<std::size_t>(v)])];
                    const int base =
                        static_cast<int>(static_cast<std::size_t>(v) *
                                         static_cast<std::size_t>(max_slots));
                    for (int s = 0; s < static_cast<int>(pr.partner.size()); ++s) {
                        const int q2 = pr.partner[static_cast<std::size_t>(s)];
                        if (q2 > s) {
                            int a = uf_find(slot_link_flat[static_cast<std::size_t>(base + s)]);
                            int b = uf_find(slot_link_flat[static_cast<std::size_t>(base + q2)]);
                            if (a != b) uf_parent[static_cast<std::size_t>(a)] = b;
                        }
                    }
                }
                // roots of the loops through the origin (vertex 0 owns the
                // first max_slots entries of slot_link_flat)
                int origin_roots[16];
                int n_roots = 0;
                for (int so = 0; so < max_slots; ++so) {
                    const int lo = slot_link_flat[static_cast<std::size_t>(so)];
                    if (lo < 0) continue;
                    const int r = uf_find(lo);
                    bool dup = false;
                    for (int k = 0; k < n_roots; ++k) dup = dup || origin_roots[k] == r;
                    if (!dup && n_roots < 16) origin_roots[n_roots++] = r;
                }
                for (int x = 0; x < V; ++x) {
                    bool hit = false;
                    for (int s = 0; s < max_slots && !hit; ++s) {
                        const int lx = slot_link_flat[static_cast<std::size_t>(x) *
                                                          static_cast<std::size_t>(max_slots) +
                                                      static_cast<std::size_t>(s)];
                        if (lx < 0) continue;
                        const int rx = uf_find(lx);
                        for (int k = 0; k < n_roots && !hit; ++k)
                            if (origin_roots[k] == rx) hit = true;
                    }
                    if (hit) p_numerator[static_cast<std::size_t>(x)] += wacc;
                }
                return;
            }
            const int v = multi_vertices[mi];
            const auto& opt = *options[static_cast<std::size_t>(v)];
            for (int c = 0; c < static_cast<int>(opt.size()); ++c) {
                pick[static_cast<std::size_t>(v)] = c;
                rec(mi + 1, wacc * opt[static_cast<std::size_t>(c)].weight);
            }
        };
        rec(0, fixed_weight);
    };

    auto closed_of = [&](const detail::PairingSums& s) {
        return kind == TwoPointKind::crossing ? s.closed_k0 : s.closed_any;
    };
    auto open_of = [&](const detail::PairingSums& s) {
        return kind == TwoPointKind::crossing ? s.closed_k1 : s.one_c1_open;
    };

    std::vector<int> forced;
    std::function<void(int, double)> dfs = [&](int pos, double wacc) {
        if (++work > budget) throw CapacityError("enumeration budget exceeded");
        if (pos == E) {
            double prod_closed = wacc;
            int zero_count = 0;
            int zero_a = -1, zero_b = -1;
            double prod_nonzero = wacc;
            for (int v = 0; v < V; ++v) {
                const double c = closed_of(sums[static_cast<std::size_t>(v)]);
                prod_closed *= c;
                if (c == 0.0) {
                    if (zero_count == 0) zero_a = v;
                    else if (zero_count == 1) zero_b = v;
                    ++zero_count;
                } else {
                    prod_nonzero *= c;
                }
            }
            if (zero_count == 0 && prod_closed != 0.0) {
                z_norm += prod_closed;
                if (want_connectivity) connectivity_pass(wacc);
            }
            const double open_o = open_of(sums[0]);
            if (open_o > 0.0 && zero_count <= 2 && (zero_count < 2 || zero_a == 0)) {
                if (zero_count == 2) {
                    const int x = zero_b;  // zero_a == 0
                    const double open_x = open_of(sums[static_cast<std::size_t>(x)]);
                    if (open_x > 0.0)
                        numerator[static_cast<std::size_t>(x)] += prod_nonzero * open_o * open_x;
                } else if (zero_count == 1) {
                    if (zero_a == 0) {
                        for (int x = 1; x < V; ++x) {
                            const double open_x = open_of(sums[static_cast<std::size_t>(x)]);
                            if (open_x > 0.0)
                                numerator[static_cast<std::size_t>(x)] +=
                                    prod_nonzero / closed_of(sums[static_cast<std::size_t>(x)]) *
                                    open_o * open_x;
                        }
                    } else {
                        const int x = zero_a;
                        const double open_x = open_of(sums[static_cast<std::size_t>(x)]);
                        if (open_x > 0.0)
                            numerator[static_cast<std::size_t>(x)] +=
                                prod_nonzero / closed_of(sums[0]) * open_o * open_x;
                    }
                } else {
                    for (int x = 1; x < V; ++x) {
                        const double open_x = open_of(sums[static_cast<std::size_t>(x)]);
                        if (open_x > 0.0)
                            numerator[static_cast<std::size_t>(x)] +=
                                prod_nonzero / closed_of(sums[0]) /
                                closed_of(sums[static_cast<std::size_t>(x)]) * open_o * open_x;
                    }
                }
            }
            return;
        }
        const int e = order[static_cast<std::size_t>(pos)];
        for (int ci = 0; ci < n_choices; ++ci) {
            edge_choice[static_cast<std::size_t>(e)] = ci;
            bool viable = true;
            int pushed = 0;
            for (int v : closes[static_cast<std::size_t>(pos)]) {
                const auto& s = sums_for(v);
                sums[static_cast<std::size_t>(v)] = s;
                if (closed_of(s) == 0.0) {
                    if (open_of(s) == 0.0) {
                        viable = false;
                        break;
                    }
                    forced.push_back(v);
                    ++pushed;
                }
            }
            if (viable) {
                bool ok = forced.size() <= 2;
                if (ok && forced.size() == 2 && forced[0] != 0 && forced[1] != 0) ok = false;
                if (ok && !forced.empty() && close_at[0] <= pos) {
                    const bool origin_forced =
                        std::find(forced.begin(), forced.end(), 0) != forced.end();
                    bool non_origin_forced = false;
                    for (int f : forced)
                        if (f != 0) non_origin_forced = true;
                    if (non_origin_forced && !origin_forced && open_of(sums[0]) == 0.0)
                        ok = false;
                }
                if (ok)
                    dfs(pos + 1,
                        wacc * choices[static_cast<std::size_t>(ci)].weight);
            }
            for (int k = 0; k < pushed; ++k) forced.pop_back();
        }
        edge_choice[static_cast<std::size_t>(e)] = 0;
    };

    dfs(0, 1.0);

    if (z_norm <= 0.0)
        throw std::runtime_error("normalization sector has zero measure (check U preset)");

    EnumerationResult out{TwoPointTable(g.sides(), Provenance::enumeration), 0.0, 0.0, 0, 0.0};
    out.z_norm = z_norm;
    out.work_units = work;
    {
        double fact = 1.0, partial = 1.0;
        for (int k = 1; k <= p.m_max; ++k) {
            fact *= p.beta / k;
            partial += fact;
        }
        out.truncation_bound_per_edge = std::exp(p.beta) - partial;
    }
    for (int x = 0; x < V; ++x)
        out.table.values[static_cast<std::size_t>(x)] =
            numerator[static_cast<std::size_t>(x)] / z_norm;
    if (kind == TwoPointKind::crossing) {
        std::vector<double> pc(static_cast<std::size_t>(V));
        for (int x = 0; x < V; ++x)
            pc[static_cast<std::size_t>(x)] = p_numerator[static_cast<std::size_t>(x)] / z_norm;
        const double pairs = static_cast<double>(N) * (N - 1);  // 2 C(N,2)
        double scale = 0.0;
        for (int x = 0; x < V; ++x)
            scale = std::max(scale, std::abs(out.table.values[static_cast<std::size_t>(x)]));
        if (scale == 0.0) scale = 1.0;
        for (int x = 1; x < V; ++x) {
            const double dev = std::abs(out.table.values[static_cast<std::size_t>(x)] -
                                        pairs * pc[static_cast<std::size_t>(x)]);
            out.identity_rel_error = std::max(out.identity_rel_error, dev / scale);
        }
        out.table.p_connect = std::move(pc);
    }
    return out;
}

} // namespace rpmono::rpm
