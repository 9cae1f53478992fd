#include <doctest.h>

#include "rpmono/lattice.hpp"
#include "rpmono/rng.hpp"

using namespace rpmono;
using namespace rpmono::lattice;

TEST_CASE("build_torus counts vertices and edges") {
    auto g = build_torus(2, 4);
    CHECK(g.vertex_count() == 16);
    CHECK(g.edge_count() == 32);

    auto g3 = build_torus(3, 4);
    CHECK(g3.vertex_count() == 64);
    CHECK(g3.edge_count() == 192);

    CHECK_THROWS_AS(build_torus(2, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_torus(2, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_torus(0, 4), std::invalid_argument);
}

TEST_CASE("L=2 edge conventions") {
    auto doubled = build_torus(2, 2);
    CHECK(doubled.convention() == EdgeConvention::doubled);
    CHECK(doubled.vertex_count() == 4);
    CHECK(doubled.edge_count() == 8);  // d L^d
    CHECK(doubled.has_doubled_edges());
    for (int v = 0; v < 4; ++v) CHECK(doubled.incident_edges(v).size() == 4);

    auto simple = build_torus(2, 2, EdgeConvention::simple);
    CHECK(simple.edge_count() == 4);
    CHECK_FALSE(simple.has_doubled_edges());

    // doubled convention makes no sense without a side of length 2
    CHECK_THROWS_AS(build_torus(2, 4, EdgeConvention::doubled), std::invalid_argument);
}

TEST_CASE("rectangular tori are supported and flagged") {
    auto g = build_torus({4, 2});
    CHECK(g.vertex_count() == 8);
    CHECK(g.edge_count() == 16);  // 8 + 8 (doubled in the short direction)
    CHECK(g.non_paper_geometry());
    CHECK_FALSE(build_torus(2, 4).non_paper_geometry());
}

TEST_CASE("reflect_vertex examples") {
    auto g = build_torus(2, 4);
    const auto r_edge = Reflection::through_edge(0, 0);  // m = 1/2 along axis 1
    CHECK(reflect_vertex(g, r_edge, g.vertex({0, 0})) == g.vertex({1, 0}));
    CHECK(reflect_vertex(g, r_edge, g.vertex({2, 1})) == g.vertex({3, 1}));

    const auto r_vertex = Reflection::through_vertex(0, 1);  // m = 1
    CHECK(reflect_vertex(g, r_vertex, g.vertex({0, 0})) == g.vertex({2, 0}));
    CHECK(r_edge.kind() == ReflectionKind::through_edges);
    CHECK(r_vertex.kind() == ReflectionKind::through_vertices);
}

TEST_CASE("reflection is an involution") {
    Rng rng(3);
    for (auto dims : {std::vector<int>{4}, {4, 4}, {2, 2}, {6, 4}}) {
        auto g = build_torus(dims);
        for (int it = 0; it < 50; ++it) {
            Reflection r{rng.index(g.dim()), rng.index(2 * g.side(0))};
            r.twice_offset = rng.index(2 * g.side(r.axis));
            const int x = rng.index(g.vertex_count());
            CHECK(reflect_vertex(g, r, reflect_vertex(g, r, x)) == x);
        }
    }
}

TEST_CASE("reflection_halves splits the torus") {
    auto g1 = build_torus(1, 4);
    auto [plus, minus] = reflection_halves(g1, Reflection::through_edge(0, 0));
    CHECK(plus.vertices() == std::vector<int>{1, 2});
    CHECK(minus.vertices() == std::vector<int>{0, 3});

    auto [vp, vm] = reflection_halves(g1, Reflection::through_vertex(0, 0));
    CHECK(vp.contains(0));
    CHECK(vp.contains(1));
    CHECK(vp.contains(2));
    CHECK(vm.vertices() == std::vector<int>{3});
}

TEST_CASE("half exchange under edge reflections") {
    Rng rng(5);
    for (auto dims : {std::vector<int>{4, 4}, {2, 2}, {6, 4}}) {
        auto g = build_torus(dims);
        for (int it = 0; it < 20; ++it) {
            const int axis = rng.index(g.dim());
            const auto r = Reflection::through_edge(axis, rng.index(g.side(axis)));
            auto [plus, minus] = reflection_halves(g, r);
            CHECK(plus.size() + minus.size() == g.vertex_count());
            CHECK(plus.reflected(r) == minus);
            CHECK(minus.reflected(r) == plus);
        }
    }
}

TEST_CASE("reflection_image staircase reaches the target") {
    auto g = build_torus(2, 4);
    {
        auto seq = reflection_image(g, g.vertex({1, 0}));
        CHECK(seq.size() == 1);
        CHECK(seq[0].axis == 0);
        CHECK(seq[0].twice_offset == 1);
        CHECK(apply_reflections(g, seq, g.origin()) == g.vertex({1, 0}));
    }
    {
        auto seq = reflection_image(g, g.vertex({1, 1}));
        CHECK(seq.size() == 2);
        CHECK(apply_reflections(g, seq, g.origin()) == g.vertex({1, 1}));
    }
}

TEST_CASE("reflection_image path independence") {
    for (auto dims : {std::vector<int>{4, 4}, {6, 6}, {4, 4, 4}, {6, 6, 6}}) {
        auto g = build_torus(dims);
        std::vector<int> fwd(static_cast<std::size_t>(g.dim()));
        std::iota(fwd.begin(), fwd.end(), 0);
        auto rev = fwd;
        std::reverse(rev.begin(), rev.end());
        for (int x = 0; x < g.vertex_count(); ++x) {
            const auto a = apply_reflections(g, reflection_image(g, x, fwd), g.origin());
            const auto b = apply_reflections(g, reflection_image(g, x, rev), g.origin());
            CHECK(a == x);
            CHECK(b == x);
        }
    }
}

TEST_CASE("box_Q examples") {
    auto g = build_torus(2, 4);
    auto q = box_Q(g, g.vertex({1, 1}));
    CHECK(q.size() == 4);
    for (int a : {0, 1})
        for (int b : {0, 1}) CHECK(q.contains(g.vertex({a, b})));

    CHECK(box_Q(g, g.origin()).vertices() == std::vector<int>{0});

    auto g1 = build_torus(1, 4);
    CHECK(box_Q(g1, 2).size() == 4);
}

TEST_CASE("shell_S complement cardinality") {
    auto g = build_torus(2, 4);
    CHECK(shell_S(g, 1).complement().size() == 4);
    CHECK(shell_S(g, 0).size() == 0);
    auto g3 = build_torus(3, 6);
    CHECK(shell_S(g3, 1).complement().size() == 64);
    for (int r = 0; r <= 2; ++r)
        CHECK(shell_S(g, r).complement().size() == (4 - 2 * r) * (4 - 2 * r));
    CHECK_THROWS_AS(shell_S(g, 3), std::invalid_argument);
}

TEST_CASE("dual momenta") {
    auto g1 = build_torus(1, 4);
    auto k1 = dual_momenta(g1);
    REQUIRE(k1.size() == 4);
    const double pi = 3.14159265358979323846;
    CHECK(k1[0][0] == doctest::Approx(0.0));
    CHECK(k1[1][0] == doctest::Approx(pi / 2));
    CHECK(k1[2][0] == doctest::Approx(pi));
    CHECK(k1[3][0] == doctest::Approx(3 * pi / 2));

    CHECK(dual_momenta(build_torus(2, 2)).size() == 4);
    CHECK(dual_momenta(build_torus(2, 4)).size() == 16);
}

TEST_CASE("vertex set serialization is sorted") {
    auto g = build_torus(2, 4);
    VertexSet s(g);
    s.insert(g.vertex({3, 2}));
    s.insert(g.vertex({0, 1}));
    s.insert(g.vertex({1, 0}));
    const auto coords = s.sorted_coords();
    REQUIRE(coords.size() == 3);
    CHECK(coords[0] == std::vector<int>{0, 1});
    CHECK(coords[1] == std::vector<int>{1, 0});
    CHECK(coords[2] == std::vector<int>{3, 2});
}
