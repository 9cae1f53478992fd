#include <doctest.h>

#include "rpmono/checker.hpp"
#include "rpmono/quantum_gibbs.hpp"
#include "rpmono/rng.hpp"

using namespace rpmono;
using namespace rpmono::checker;

namespace {

TwoPointTable constant_table(std::vector<int> dims, double c) {
    TwoPointTable t(std::move(dims), Provenance::synthetic);
    std::fill(t.values.begin(), t.values.end(), c);
    return t;
}

} // namespace

TEST_CASE("constant tables pass every check with margin zero") {
    auto t = constant_table({4, 4}, 0.5);
    CheckConfig cfg;
    auto rep = check_symmetry(t, cfg);
    rep.merge(check_axis_dominance(t, cfg));
    rep.merge(check_odd_monotonicity(t, cfg));
    rep.merge(check_amplification(t, cfg, 0.5));
    CHECK(rep.failures() == 0);
    for (const auto& r : rep.records) CHECK(r.margin == 0.0);
}

TEST_CASE("planted asymmetry fails exactly the planted pair") {
    auto t = constant_table({4, 4}, 0.5);
    const auto g = t.geometry();
    t.values[static_cast<std::size_t>(g.vertex({1, 0}))] = 0.6;  // breaks G(o,x) = G(o,-x)
    CheckConfig cfg;
    auto rep = check_symmetry(t, cfg);
    int fails = 0;
    for (const auto& r : rep.records)
        if (!r.pass) {
            ++fails;
            CHECK(r.location["x"] == json({1, 0}));
        }
    CHECK(fails == 1);
}

TEST_CASE("planted dominance violation is caught") {
    auto t = constant_table({4, 4}, 0.5);
    const auto g = t.geometry();
    t.values[static_cast<std::size_t>(g.vertex({1, 1}))] = 0.6;  // G(o,(1,0)) + 0.1
    CheckConfig cfg;
    auto rep = check_axis_dominance(t, cfg);
    std::vector<json> failing;
    for (const auto& r : rep.records)
        if (!r.pass) failing.push_back(r.location);
    REQUIRE(failing.size() == 2);  // both axes see the bump
    CHECK(failing[0]["z"] == json({1, 1}));
    CHECK(failing[1]["z"] == json({1, 1}));
}

TEST_CASE("planted monotonicity violation is caught at the pair") {
    auto t = constant_table({8}, 0.5);
    const auto g = t.geometry();
    t.values[static_cast<std::size_t>(g.vertex({3}))] = 0.6;
    t.values[static_cast<std::size_t>(g.vertex({5}))] = 0.6;  // keep symmetry intact
    CheckConfig cfg;
    auto rep = check_odd_monotonicity(t, cfg);
    bool found = false;
    for (const auto& r : rep.records)
        if (!r.pass && r.location["n"] == 1 && r.location["n_next"] == 3) found = true;
    CHECK(found);
    // the same table passes the symmetry check
    CHECK(check_symmetry(t, cfg).failures() == 0);
}

TEST_CASE("partition lemma margin matches the combinatorial count on constants") {
    const double c = 0.5;
    auto t = constant_table({4, 4}, c);
    const auto g = t.geometry();
    CheckConfig cfg;
    Rng rng(77);
    for (int it = 0; it < 50; ++it) {
        lattice::VertexSet q(g);
        for (int v = 0; v < g.vertex_count(); ++v)
            if (rng.coin()) q.insert(v);
        const int axis = rng.index(2);
        const auto r = lattice::Reflection::through_edge(axis, rng.index(4));
        auto rep = check_partition_lemma(t, cfg, q, r);
        REQUIRE(rep.records.size() == 1);
        CHECK(rep.records[0].pass);
        // brute-force pair counting over unordered pairs: with a = |Q n T+|
        // and b = |Q n T-|, the two sides hold C(a+b,2) and
        // (C(2a,2) + C(2b,2))/2 pairs, so margin = (a-b)^2 c / 2
        auto [tp, tm] = lattice::reflection_halves(g, r);
        const int a = q.intersect(tp).size();
        const int b = q.intersect(tm).size();
        CHECK(rep.records[0].margin ==
              doctest::Approx(static_cast<double>(a - b) * (a - b) * c / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("partition lemma on {o, z} reduces to axis dominance") {
    // dense quantum table on the 4x2 torus
    gibbs::GibbsParams p{lattice::build_torus({4, 2}), 0.5, -1.0, 1.0};
    auto t = gibbs::dense_correlations(p);
    const auto g = t.geometry();
    CheckConfig cfg;

    const int z = g.vertex({1, 1});
    lattice::VertexSet q(g);
    q.insert(g.origin());
    q.insert(z);
    // plane bisecting {0, e_1}: the canonical choice for odd z_1
    const auto r = lattice::Reflection::through_edge(0, 0);
    auto lemma = check_partition_lemma(t, cfg, q, r);
    REQUIRE(lemma.records.size() == 1);

    auto dom = check_axis_dominance(t, cfg);
    bool matched = false;
    for (const auto& rec : dom.records) {
        if (rec.inequality == "odd_axis_dominance" && rec.location["z"] == json({1, 1}) &&
            rec.location["i"] == 1) {
            matched = true;
            CHECK(lemma.records[0].pass == rec.pass);
            CHECK(lemma.records[0].margin == doctest::Approx(rec.margin).epsilon(1e-10));
        }
    }
    CHECK(matched);
}

TEST_CASE("quantum dense tables pass the full inequality suite") {
    for (auto dims : {std::vector<int>{2, 2}, {4, 2}}) {
        for (double u : {0.0, -1.0}) {
            gibbs::GibbsParams p{lattice::build_torus(dims), 0.5, u, 1.0};
            auto t = gibbs::dense_correlations(p);
            CheckConfig cfg;
            auto rep = check_symmetry(t, cfg);
            rep.merge(check_axis_dominance(t, cfg));
            rep.merge(check_odd_monotonicity(t, cfg));
            rep.merge(check_amplification(t, cfg, p.S * (p.S + 1) / 3.0));
            CHECK(rep.failures() == 0);

            Rng rng(13);
            const auto geometry = t.geometry();
            for (int it = 0; it < 50; ++it) {
                lattice::VertexSet q(geometry);
                for (int v = 0; v < t.vertex_count(); ++v)
                    if (rng.coin()) q.insert(v);
                const int axis = rng.index(t.dim());
                const auto r =
                    lattice::Reflection::through_edge(axis, rng.index(geometry.side(axis)));
                CHECK(check_partition_lemma(t, cfg, q, r).failures() == 0);
            }
        }
    }
}

TEST_CASE("amplification guards and planted dip") {
    auto t = constant_table({8}, 0.2);
    const auto g = t.geometry();
    CheckConfig cfg;
    CHECK_THROWS_AS(check_amplification(t, cfg, 0.1), std::invalid_argument);

    t.values[static_cast<std::size_t>(g.vertex({3}))] = 0.9;
    t.values[static_cast<std::size_t>(g.vertex({5}))] = 0.9;
    // y = 1 lies in the box of z = 3; bound 2*0.9 - 1 = 0.8 > 0.2
    auto rep = check_amplification(t, cfg, 1.0);
    bool found = false;
    for (const auto& r : rep.records)
        if (!r.pass && r.location["z"] == json({3}) && r.location["y"] == json({1})) found = true;
    CHECK(found);
}

TEST_CASE("positivity report arithmetic") {
    // M = 1, Cesaro mean 0.95, d = 2: remark bounds 0.2 and 0.8
    auto t = constant_table({4, 4}, 0.95);
    CheckConfig cfg;
    cfg.vertex_rp = true;
    auto rep = positivity_report(t, cfg, 1.0, 0.49);
    CHECK(rep.notes["cesaro_mean"] == doctest::Approx(0.95));
    CHECK(rep.notes["bound_ii_eps_to_0"] == doctest::Approx(1.0 - 16.0 * 0.05).epsilon(1e-9));
    CHECK(rep.notes["bound_iii_eps_to_0"] == doctest::Approx(1.0 - 4.0 * 0.05).epsilon(1e-9));
    CHECK(rep.failures() == 0);

    // constant table with M = c: bounds equal c, margins 0
    auto tc = constant_table({4, 4}, 0.3);
    auto repc = positivity_report(tc, cfg, 0.3, 0.49);
    for (const auto& r : repc.records) {
        CHECK(r.pass);
        CHECK(r.margin == doctest::Approx(0.0));
    }

    CHECK_THROWS_AS(positivity_report(t, cfg, 1.0, 0.7), std::invalid_argument);
    CHECK_THROWS_AS(positivity_report(t, cfg, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("statistical slack uses stderr in quadrature") {
    auto t = constant_table({4}, 0.5);
    t.provenance = Provenance::stochastic;
    t.stderrs = std::vector<double>(4, 0.01);
    CheckConfig cfg;
    auto rep = check_symmetry(t, cfg);
    for (const auto& r : rep.records) {
        if (r.location["x"] == json({1})) {
            // both terms carry stderr 0.01
            CHECK(r.slack == doctest::Approx(cfg.abs_tol +
                                             3.0 * std::sqrt(2.0) * 0.01).epsilon(1e-12));
            CHECK(r.statistical);
        }
    }
    // a small fluctuation within the slack passes
    t.values[1] = 0.5 + 0.02;
    t.values[3] = 0.5 - 0.02;
    auto rep2 = check_symmetry(t, cfg);
    CHECK(rep2.failures() == 0);
}

TEST_CASE("noise consistency policy") {
    CheckReport rep;
    CheckConfig cfg;
    for (int i = 0; i < 100; ++i) {
        CheckRecord r;
        r.pass = i >= 3;  // 3 failures
        r.statistical = true;
        rep.records.push_back(r);
    }
    CHECK(rep.noise_consistent(cfg));  // 3 <= max(5, ...)
    for (auto& r : rep.records) r.pass = false;
    CHECK_FALSE(rep.noise_consistent(cfg));
    // any deterministic failure is fatal
    CheckReport det;
    CheckRecord r;
    r.pass = false;
    r.statistical = false;
    det.records.push_back(r);
    CHECK_FALSE(det.noise_consistent(cfg));
}

TEST_CASE("reports serialize to json") {
    auto t = constant_table({4}, 0.25);
    CheckConfig cfg;
    auto rep = check_symmetry(t, cfg);
    auto j = rep.to_json();
    CHECK(j.contains("records"));
    CHECK(j.contains("summary"));
    CHECK(j["summary"]["failures"] == 0);
    for (const auto& r : j["records"]) {
        CHECK(r.contains("inequality"));
        CHECK(r.contains("lhs"));
        CHECK(r.contains("rhs"));
        CHECK(r.contains("slack"));
        CHECK(r.contains("margin"));
        CHECK(r.contains("pass"));
    }
}
