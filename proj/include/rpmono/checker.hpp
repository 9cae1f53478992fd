#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpmono/lattice.hpp"
#include "rpmono/two_point_table.hpp"

namespace rpmono::checker {

using json = nlohmann::json;

struct CheckConfig {
    double sigma_k = 3.0;    // statistical slack multiplier
    double abs_tol = 1e-10;  // deterministic slack
    bool vertex_rp = false;  // enable vertex-reflection variants
};

struct CheckRecord {
    std::string inequality;
    json location;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    double margin = 0.0;  // rhs - lhs
    bool pass = true;
    bool statistical = false;  // slack carried a stderr component

    json to_json() const {
        return json{{"inequality", inequality}, {"location", location}, {"lhs", lhs},
                    {"rhs", rhs},               {"slack", slack},       {"margin", margin},
                    {"pass", pass}};
    }
};

struct CheckReport {
    std::vector<CheckRecord> records;
    json notes = json::object();

    int failures() const {
        int n = 0;
        for (const auto& r : records)
            if (!r.pass) ++n;
        return n;
    }
    int deterministic_failures() const {
        int n = 0;
        for (const auto& r : records)
            if (!r.pass && !r.statistical) ++n;
        return n;
    }
    int statistical_failures() const {
        int n = 0;
        for (const auto& r : records)
            if (!r.pass && r.statistical) ++n;
        return n;
    }

    void merge(CheckReport other) {
        for (auto& r : other.records) records.push_back(std::move(r));
        for (auto& [k, v] : other.notes.items()) notes[k] = v;
    }

    /// One-sided tail mass above sigma_k for a standard normal.
    static double tail_probability(double sigma_k) {
        return 0.5 * std::erfc(sigma_k / std::sqrt(2.0));
    }

    /// Statistical 3-sigma flukes are expected; up to
    /// max(5, ceil(5 N p_tail)) failing statistical records count as
    /// consistent with noise. Deterministic failures never do.
    bool noise_consistent(const CheckConfig& cfg) const {
        if (deterministic_failures() > 0) return false;
        const double expected =
            static_cast<double>(records.size()) * tail_probability(cfg.sigma_k);
        const int allowance = std::max(5, static_cast<int>(std::ceil(5.0 * expected)));
        return statistical_failures() <= allowance;
    }

    json to_json() const {
        json recs = json::array();
        for (const auto& r : records) recs.push_back(r.to_json());
        return json{{"records", recs},
                    {"notes", notes},
                    {"summary",
                     {{"total", records.size()},
                      {"failures", failures()},
                      {"deterministic_failures", deterministic_failures()},
                      {"statistical_failures", statistical_failures()}}}};
    }
};

namespace detail {

/// slack = abs_tol + sigma_k * (stderrs of the participating terms combined
/// in quadrature); records with any stderr present count as statistical.
struct SlackBuilder {
    const TwoPointTable& t;
    const CheckConfig& cfg;
    double var = 0.0;
    bool statistical = false;

    double value(int x) { return t.values[static_cast<std::size_t>(x)]; }
    double term(int x, double coeff = 1.0) {
        if (t.has_stderr()) {
            const double se = coeff * t.stderr_at(x);
            var += se * se;
            if (se != 0.0) statistical = true;
        }
        return coeff * value(x);
    }
    double slack() const { return cfg.abs_tol + cfg.sigma_k * std::sqrt(var); }
};

inline CheckRecord make_record(std::string inequality, json location, double lhs, double rhs,
                               const SlackBuilder& sb) {
    CheckRecord r;
    r.inequality = std::move(inequality);
    r.location = std::move(location);
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = sb.slack();
    r.margin = rhs - lhs;
    r.pass = r.margin >= -r.slack;
    r.statistical = sb.statistical;
    return r;
}

} // namespace detail

/// G(o, x) = G(o, -x) for every x (torus symmetry of the table).
inline CheckReport check_symmetry(const TwoPointTable& t, const CheckConfig& cfg) {
    if (!t.complete()) throw std::invalid_argument("check_symmetry requires a complete table");
    const auto g = t.geometry();
    CheckReport rep;
    for (int x = 0; x < g.vertex_count(); ++x) {
        const int nx = g.negate(x);
        if (nx < x) continue;  // one record per {x, -x}
        detail::SlackBuilder sb{t, cfg};
        const double lhs = sb.term(x);
        const double rhs = sb.term(nx);
        auto r = detail::make_record("symmetry", json{{"x", g.coords(x)}}, lhs, rhs, sb);
        // equality: fail when |margin| exceeds slack
        r.pass = std::abs(r.margin) <= r.slack;
        rep.records.push_back(std::move(r));
    }
    return rep;
}

/// Axis dominance: G(o,z) <= G(o, z_i e_i) for odd z_i, and
/// G(o,z) <= (G(o,(z_i-1)e_i) + G(o,(z_i+1)e_i))/2 for even z_i != 0.
/// With vertex reflections the first form extends to even z_i.
inline CheckReport check_axis_dominance(const TwoPointTable& t, const CheckConfig& cfg) {
    if (!t.complete()) throw std::invalid_argument("table must be complete");
    const auto g = t.geometry();
    CheckReport rep;
    for (int x = 0; x < g.vertex_count(); ++x) {
        for (int i = 0; i < g.dim(); ++i) {
            const int zi = g.coord(x, i);
            if (zi == 0) continue;
            std::vector<int> axis_coord(static_cast<std::size_t>(g.dim()), 0);
            axis_coord[static_cast<std::size_t>(i)] = zi;
            const int axis_vertex = g.vertex(axis_coord);
            if (axis_vertex == x && zi % 2 == 1) continue;  // on-axis odd record is trivial
            if (zi % 2 == 1) {
                detail::SlackBuilder sb{t, cfg};
                const double lhs = sb.term(x);
                const double rhs = sb.term(axis_vertex);
                rep.records.push_back(detail::make_record(
                    "odd_axis_dominance", json{{"z", g.coords(x)}, {"i", i + 1}}, lhs, rhs, sb));
            } else {
                std::vector<int> lo = axis_coord, hi = axis_coord;
                lo[static_cast<std::size_t>(i)] = zi - 1;
                hi[static_cast<std::size_t>(i)] = zi + 1;
                {
                    detail::SlackBuilder sb{t, cfg};
                    const double lhs = sb.term(x);
                    const double rhs = sb.term(g.vertex(lo), 0.5) + sb.term(g.vertex(hi), 0.5);
                    rep.records.push_back(detail::make_record(
                        "even_axis_average", json{{"z", g.coords(x)}, {"i", i + 1}}, lhs, rhs,
                        sb));
                }
                if (cfg.vertex_rp && axis_vertex != x) {
                    detail::SlackBuilder sb{t, cfg};
                    const double lhs = sb.term(x);
                    const double rhs = sb.term(axis_vertex);
                    rep.records.push_back(detail::make_record(
                        "even_axis_dominance_vertex_rp",
                        json{{"z", g.coords(x)}, {"i", i + 1}}, lhs, rhs, sb));
                }
            }
        }
    }
    return rep;
}

/// For every direction i and every y with y . e_i = 0, the sequence
/// n -> G(o, y + n e_i) + G(o, n e_i) is non-increasing over odd n in
/// (0, L/2); with vertex reflections over all integer n in (0, L/2].
inline CheckReport check_odd_monotonicity(const TwoPointTable& t, const CheckConfig& cfg) {
    if (!t.complete()) throw std::invalid_argument("table must be complete");
    const auto g = t.geometry();
    CheckReport rep;
    for (int i = 0; i < g.dim(); ++i) {
        const int L = g.side(i);
        for (int y = 0; y < g.vertex_count(); ++y) {
            if (g.coord(y, i) != 0) continue;
            auto seq_value = [&](int n, detail::SlackBuilder& sb) {
                auto cy = g.coords(y);
                cy[static_cast<std::size_t>(i)] = n % L;
                std::vector<int> cn(static_cast<std::size_t>(g.dim()), 0);
                cn[static_cast<std::size_t>(i)] = n % L;
                return sb.term(g.vertex(cy)) + sb.term(g.vertex(cn));
            };
            const int step = cfg.vertex_rp ? 1 : 2;
            const int first = cfg.vertex_rp ? 1 : 1;
            const int last = cfg.vertex_rp ? L / 2 : (L / 2 - 1);
            for (int n = first; n + step <= last; n += step) {
                detail::SlackBuilder sb{t, cfg};
                const double vn = seq_value(n, sb);
                const double vnext = seq_value(n + step, sb);
                rep.records.push_back(detail::make_record(
                    "odd_monotonicity",
                    json{{"y", g.coords(y)}, {"i", i + 1}, {"n", n}, {"n_next", n + step}},
                    vnext, vn, sb));
            }
        }
    }
    return rep;
}

/// Partition inequality: sum_{x != y in Q} G(x,y) <= (sum over Q+ + sum
/// over Q-)/2 with
/// Q+- = (Q n T+-) u theta(Q n T+-). Sums run over unordered pairs; G(x,y)
/// is reconstructed as G(o, y - x) by torus symmetry.
inline CheckReport check_partition_lemma(const TwoPointTable& t, const CheckConfig& cfg,
                                         const lattice::VertexSet& q,
                                         const lattice::Reflection& r) {
    if (!t.complete()) throw std::invalid_argument("table must be complete");
    const auto g = t.geometry();
    auto [tplus, tminus] = lattice::reflection_halves(g, r);

    auto pair_sum = [&](const std::vector<int>& verts, detail::SlackBuilder& sb) {
        double acc = 0.0;
        for (std::size_t a = 0; a < verts.size(); ++a)
            for (std::size_t b = a + 1; b < verts.size(); ++b) {
                const int diff = g.translate(verts[b], g.negate(verts[a]));
                acc += sb.term(diff);
            }
        return acc;
    };

    const auto qv = q.vertices();
    auto qplus = q.intersect(tplus);
    auto qminus = q.intersect(tminus);
    auto qp = qplus.unite(qplus.reflected(r)).vertices();
    auto qm = qminus.unite(qminus.reflected(r)).vertices();

    // one slack builder across all terms: lhs at coefficient 1, halves at 1/2
    detail::SlackBuilder sb{t, cfg};
    const double lhs = pair_sum(qv, sb);
    double rhs = 0.0;
    for (std::size_t a = 0; a < qp.size(); ++a)
        for (std::size_t b = a + 1; b < qp.size(); ++b)
            rhs += sb.term(g.translate(qp[b], g.negate(qp[a])), 0.5);
    for (std::size_t a = 0; a < qm.size(); ++a)
        for (std::size_t b = a + 1; b < qm.size(); ++b)
            rhs += sb.term(g.translate(qm[b], g.negate(qm[a])), 0.5);

    CheckReport rep;
    json loc{{"Q", q.sorted_coords()},
             {"reflection", {{"axis", r.axis + 1}, {"twice_offset", r.twice_offset}}}};
    rep.records.push_back(detail::make_record("partition_lemma", std::move(loc), lhs, rhs, sb));
    return rep;
}

/// Amplification bound: G(o, y) >= 2^d G(o, z) - (2^d - 1) M for y in the
/// corner box Q_z,
/// with z (and y) all-odd unless vertex reflections hold.
inline CheckReport check_amplification(const TwoPointTable& t, const CheckConfig& cfg,
                                       double m_bound) {
    if (!t.complete()) throw std::invalid_argument("table must be complete");
    const auto g = t.geometry();
    for (double v : t.values)
        if (v > m_bound + cfg.abs_tol)
            throw std::invalid_argument("amplification requires M >= max table value");

    auto all_odd = [&](int x) {
        for (int i = 0; i < g.dim(); ++i)
            if (g.abs_coord(x, i) % 2 == 0) return false;
        return true;
    };

    const double amp = std::pow(2.0, g.dim());
    CheckReport rep;
    for (int z = 0; z < g.vertex_count(); ++z) {
        if (!cfg.vertex_rp && !all_odd(z)) continue;
        const auto box = lattice::box_Q(g, z);
        for (int y : box.vertices()) {
            if (!cfg.vertex_rp && !all_odd(y)) continue;
            detail::SlackBuilder sb{t, cfg};
            const double lhs = sb.term(z, amp) - (amp - 1.0) * m_bound;
            const double rhs = sb.term(y);
            rep.records.push_back(detail::make_record(
                "amplification", json{{"z", g.coords(z)}, {"y", g.coords(y)}, {"M", m_bound}},
                lhs, rhs, sb));
        }
    }
    return rep;
}

/// Finite-size positivity bounds, with the Cesaro mean of
/// this table substituted for C1 (a finite-size surrogate, flagged as such).
/// Bounds that are non-positive are vacuous and flagged, not failed.
inline CheckReport positivity_report(const TwoPointTable& t, const CheckConfig& cfg,
                                     double m_bound, double eps) {
    if (!t.complete()) throw std::invalid_argument("table must be complete");
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("eps must lie in (0, 1/2)");
    const auto g = t.geometry();
    const auto [cesaro, cesaro_err] = cesaro_sum(t);

    const int d = g.dim();
    const double bound_ii = m_bound - std::pow(0.25 - 0.5 * eps, -d) * (m_bound - cesaro);
    const double bound_iii = m_bound - std::pow(0.5 - eps, -d) * (m_bound - cesaro);
    const double remark_ii = m_bound - std::pow(4.0, d) * (m_bound - cesaro);
    const double remark_iii = m_bound - std::pow(2.0, d) * (m_bound - cesaro);

    CheckReport rep;
    rep.notes["cesaro_mean"] = cesaro;
    rep.notes["cesaro_stderr"] = cesaro_err;
    rep.notes["cesaro_is_finite_size_surrogate_for_C1"] = true;
    rep.notes["bound_ii"] = bound_ii;
    rep.notes["bound_iii"] = bound_iii;
    rep.notes["bound_ii_eps_to_0"] = remark_ii;
    rep.notes["bound_iii_eps_to_0"] = remark_iii;
    rep.notes["bound_ii_vacuous"] = bound_ii <= 0.0;
    rep.notes["bound_iii_vacuous"] = bound_iii <= 0.0;

    auto in_eps_box = [&](int x, bool need_odd) {
        for (int i = 0; i < d; ++i) {
            const int a = g.abs_coord(x, i);
            if (a == 0) return false;
            if (static_cast<double>(a) >= eps * g.side(i)) return false;
            if (need_odd && a % 2 == 0) return false;
        }
        return true;
    };

    for (int x = 0; x < g.vertex_count(); ++x) {
        if (in_eps_box(x, true)) {
            detail::SlackBuilder sb{t, cfg};
            const double val = sb.term(x);
            auto rec = detail::make_record("positivity_ii",
                                           json{{"x", g.coords(x)}, {"vacuous", bound_ii <= 0.0}},
                                           bound_ii, val, sb);
            rep.records.push_back(std::move(rec));
        }
        if (cfg.vertex_rp && in_eps_box(x, false)) {
            detail::SlackBuilder sb{t, cfg};
            const double val = sb.term(x);
            rep.records.push_back(detail::make_record(
                "positivity_iii", json{{"x", g.coords(x)}, {"vacuous", bound_iii <= 0.0}},
                bound_iii, val, sb));
        }
    }
    return rep;
}

} // namespace rpmono::checker
