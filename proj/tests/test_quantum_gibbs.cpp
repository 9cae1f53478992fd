#include <doctest.h>

#include <Eigen/Dense>
#include <complex>

#include "rpmono/quantum_gibbs.hpp"
#include "rpmono/rng.hpp"

using namespace rpmono;
using namespace rpmono::gibbs;

namespace {

/// Dense H_u assembled from Kronecker products of the spin matrices;
/// independent of HamiltonianOp's gate machinery.
Eigen::MatrixXd dense_hamiltonian_oracle(const SpinGraph& graph, double S, double u) {
    const int q = spin::local_dim(S);
    std::size_t dim = 1;
    for (int i = 0; i < graph.n_sites; ++i) dim *= static_cast<std::size_t>(q);
    const auto m = spin::spin_matrices(S);
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(static_cast<int>(dim), static_cast<int>(dim));
    auto embed = [&](const spin::MatrixXcd& local, int site) {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<int>(dim), static_cast<int>(dim));
        std::size_t stride = 1;
        for (int i = 0; i < site; ++i) stride *= static_cast<std::size_t>(q);
        for (std::size_t a = 0; a < dim; ++a) {
            const int da = static_cast<int>((a / stride) % static_cast<std::size_t>(q));
            for (int db = 0; db < q; ++db) {
                const std::size_t b = a + static_cast<std::size_t>(db - da) * stride;
                out(static_cast<int>(a), static_cast<int>(b)) = local(da, db);
            }
        }
        return out;
    };
    for (auto [x, y] : graph.edges) {
        h -= 2.0 * (embed(m.s1, x) * embed(m.s1, y) + u * embed(m.s2, x) * embed(m.s2, y) +
                    embed(m.s3, x) * embed(m.s3, y));
    }
    Eigen::MatrixXd hr = h.real();
    REQUIRE(h.imag().cwiseAbs().maxCoeff() <= 1e-13);
    return hr;
}

} // namespace

TEST_CASE("hamiltonian_apply two-site example") {
    // H |up,down> = 1/2 |up,down> - |down,up>
    SpinGraph graph{2, {{0, 1}}};
    HamiltonianOp op(graph, 0.5, 1.0);
    std::vector<double> v(4, 0.0);
    v[1] = 1.0;  // digit 1 at site 0 = down at site 0? site 0 fast digit
    // |up,down>: site 0 = up (digit 0), site 1 = down (digit 1) -> index 2
    std::fill(v.begin(), v.end(), 0.0);
    v[2] = 1.0;
    auto out = op.apply(v);
    CHECK(out[2] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(std::abs(out[0]) <= 1e-14);
    CHECK(std::abs(out[3]) <= 1e-14);

    std::vector<double> zero(4, 0.0);
    auto zout = op.apply(zero);
    for (double z : zout) CHECK(z == 0.0);
}

TEST_CASE("hamiltonian matches the Kronecker oracle on small graphs") {
    Rng rng(23);
    std::vector<SpinGraph> graphs = {
        {2, {{0, 1}}},
        {2, {{0, 1}, {0, 1}}},          // doubled edge
        {3, {{0, 1}, {1, 2}, {0, 2}}},  // triangle
        {4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}},
    };
    for (const auto& graph : graphs) {
        for (double S : {0.5, 1.0}) {
            for (double u : {1.0, 0.0, -0.7, -1.0}) {
                HamiltonianOp op(graph, S, u);
                const auto oracle = dense_hamiltonian_oracle(graph, S, u);
                std::vector<double> v(op.dim());
                for (auto& x : v) x = rng.gaussian();
                auto got = op.apply(v);
                Eigen::VectorXd ve(static_cast<int>(op.dim()));
                for (std::size_t i = 0; i < op.dim(); ++i) ve(static_cast<int>(i)) = v[i];
                Eigen::VectorXd expect = oracle * ve;
                for (std::size_t i = 0; i < op.dim(); ++i)
                    CHECK(std::abs(got[i] - expect(static_cast<int>(i))) <= 1e-11);
            }
        }
    }
}

TEST_CASE("hamiltonian_apply is hermitian on random vectors") {
    GibbsParams p{lattice::build_torus({4, 2}), 0.5, -1.0, 1.0};
    HamiltonianOp op(SpinGraph::from_torus(p.geometry), p.S, p.u);
    Rng rng(31);
    for (int it = 0; it < 5; ++it) {
        std::vector<double> v(op.dim()), w(op.dim());
        for (auto& x : v) x = rng.gaussian();
        for (auto& x : w) x = rng.gaussian();
        auto hv = op.apply(v);
        auto hw = op.apply(w);
        double whv = 0, hwv = 0;
        for (std::size_t i = 0; i < op.dim(); ++i) {
            whv += w[i] * hv[i];
            hwv += hw[i] * v[i];
        }
        CHECK(std::abs(whv - hwv) <= 1e-10 * std::max(1.0, std::abs(whv)));
    }
}

TEST_CASE("spectral bounds contain the dense spectrum") {
    std::vector<SpinGraph> graphs = {
        {2, {{0, 1}}},
        {4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}},
    };
    graphs.push_back(SpinGraph::from_torus(lattice::build_torus({4, 2})));
    for (const auto& graph : graphs) {
        for (double S : {0.5, 1.0}) {
            if (graph.n_sites > 4 && S > 0.5) continue;  // keep the test fast
            for (double u : {1.0, 0.0, -1.0}) {
                HamiltonianOp op(graph, S, u);
                const auto oracle = dense_hamiltonian_oracle(graph, S, u);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle, Eigen::EigenvaluesOnly);
                const auto sb = spectral_bounds(op);
                CHECK(sb.lo() <= es.eigenvalues().minCoeff() + 1e-9);
                CHECK(sb.hi() >= es.eigenvalues().maxCoeff() - 1e-9);
            }
        }
    }
    // two-site S=1/2 u=1: spectrum {-1/2 (x3), 3/2}
    HamiltonianOp op(SpinGraph{2, {{0, 1}}}, 0.5, 1.0);
    const auto sb = spectral_bounds(op);
    CHECK(sb.lo() <= -0.5);
    CHECK(sb.hi() >= 1.5);
}

TEST_CASE("dense correlations at beta = 0") {
    for (double S : {0.5, 1.0}) {
        GibbsParams p{lattice::build_torus(2, 2), S, -1.0, 0.0};
        auto t = dense_correlations(p);
        CHECK(std::abs(t.values[0] - S * (S + 1) / 3.0) <= 1e-12);
        for (int x = 1; x < 4; ++x) CHECK(std::abs(t.values[static_cast<std::size_t>(x)]) <= 1e-12);
    }
}

TEST_CASE("two-site analytic correlation") {
    SpinGraph graph{2, {{0, 1}}};
    for (double beta : {0.5, 1.0, 2.0}) {
        DenseGibbs dg(graph, 0.5, 1.0, beta);
        const double expect = (std::exp(beta / 2) - std::exp(-1.5 * beta)) /
                              (4.0 * (3.0 * std::exp(beta / 2) + std::exp(-1.5 * beta)));
        CHECK(std::abs(dg.two_point(0, 1) - expect) <= 1e-10);
    }
}

TEST_CASE("dense tables have torus symmetries") {
    for (auto dims : {std::vector<int>{2, 2}, {4, 2}}) {
        GibbsParams p{lattice::build_torus(dims), 0.5, -1.0, 1.2};
        DenseGibbs dg(SpinGraph::from_torus(p.geometry), p.S, p.u, p.beta);
        const auto g = p.geometry;
        const auto mat = dg.two_point_matrix();
        for (int x = 0; x < g.vertex_count(); ++x)
            for (int y = 0; y < g.vertex_count(); ++y)
                for (int z : {1, g.vertex_count() / 2}) {
                    const int xz = g.translate(x, z);
                    const int yz = g.translate(y, z);
                    CHECK(std::abs(mat(x, y) - mat(xz, yz)) <= 1e-10);
                }
        auto t = dense_correlations(p);
        for (int x = 0; x < g.vertex_count(); ++x)
            CHECK(std::abs(t.values[static_cast<std::size_t>(x)] -
                           t.values[static_cast<std::size_t>(g.negate(x))]) <= 1e-10);
        CHECK(t.values[0] > 0.0);
        CHECK(t.values[0] <= p.S * p.S + 1e-12);
    }
}

TEST_CASE("dense engine respects the dimension cap") {
    GibbsParams p{lattice::build_torus(3, 4), 0.5, 0.0, 1.0};
    CHECK_THROWS_AS(dense_correlations(p), CapacityError);
}

TEST_CASE("stochastic agrees with dense on oracle systems") {
    for (auto dims : {std::vector<int>{4, 2}, {2, 2}, {4}}) {
        GibbsParams p{lattice::build_torus(dims), 0.5, -1.0, 1.0};
        auto dense = dense_correlations(p);
        auto stoch = stochastic_correlations(p, 200, 0, 7, 2);
        for (int x = 0; x < dense.vertex_count(); ++x) {
            const double delta = std::abs(stoch.table.values[static_cast<std::size_t>(x)] -
                                          dense.values[static_cast<std::size_t>(x)]);
            CHECK(delta <= 1e-2);
            CHECK(delta <= 3.0 * std::max(stoch.table.stderr_at(x), 1e-6));
        }
    }
}

TEST_CASE("stochastic estimator identities") {
    GibbsParams p{lattice::build_torus(2, 2), 0.5, 0.0, 0.0};
    auto res = stochastic_correlations(p, 64, 0, 5, 1);
    // beta = 0: degree-0 expansion, w = r exactly
    CHECK(res.degree_used >= 0);
    for (int x = 1; x < 4; ++x) {
        const double se = res.table.stderr_at(x);
        CHECK(se > 0.0);
        CHECK(std::abs(res.table.values[static_cast<std::size_t>(x)]) <= 5.0 * se);
    }

    // determinism: same seed gives bit-identical tables, independent of threads
    GibbsParams p2{lattice::build_torus({4, 2}), 0.5, -1.0, 0.7};
    auto a = stochastic_correlations(p2, 32, 0, 9, 1);
    auto b = stochastic_correlations(p2, 32, 0, 9, 2);
    for (int x = 0; x < 8; ++x) {
        CHECK(a.table.values[static_cast<std::size_t>(x)] ==
              b.table.values[static_cast<std::size_t>(x)]);
        CHECK((*a.table.stderrs)[static_cast<std::size_t>(x)] ==
              (*b.table.stderrs)[static_cast<std::size_t>(x)]);
    }

    CHECK_THROWS_AS(stochastic_correlations(p2, 1, 0, 1, 1), std::invalid_argument);
    // an absurdly small pinned degree fails the tail test
    GibbsParams p3{lattice::build_torus({4, 2}), 0.5, -1.0, 2.0};
    CHECK_THROWS_AS(stochastic_correlations(p3, 8, 2, 1, 1), std::invalid_argument);
}

TEST_CASE("cesaro of a dense table matches direct summation") {
    GibbsParams p{lattice::build_torus({4, 2}), 0.5, -1.0, 1.0};
    auto t = dense_correlations(p);
    auto [mean, err] = cesaro_sum(t);
    long double acc = 0.0L;
    for (double v : t.values) acc += static_cast<long double>(v);
    CHECK(std::abs(mean - static_cast<double>(acc / t.vertex_count())) <= 1e-14);
    CHECK(err == 0.0);

    // beta = 0: only the diagonal contributes, so the mean is S(S+1)/(3 L^d)
    GibbsParams p0{lattice::build_torus(2, 2), 1.0, -1.0, 0.0};
    auto t0 = dense_correlations(p0);
    auto [mean0, err0] = cesaro_sum(t0);
    CHECK(std::abs(mean0 - (1.0 * 2.0 / 3.0) / 4.0) <= 1e-13);
    CHECK(err0 == 0.0);
}

TEST_CASE("rp gram with the identity observable") {
    GibbsParams p{lattice::build_torus(2, 2), 0.5, -1.0, 1.0};
    const auto r = lattice::Reflection::through_edge(0, 0);
    auto check = rp_gram(p, r, {DiagObservable{1.0, {}}});
    CHECK(check.gram.rows() == 1);
    CHECK(check.gram(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(check.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rp gram positivity on the doubled 2x2 torus") {
    for (double u : {0.0, -1.0}) {
        for (double beta : {0.5, 2.0}) {
            GibbsParams p{lattice::build_torus(2, 2), 0.5, u, beta};
            const auto r = lattice::Reflection::through_edge(0, 0);
            const auto obs = random_plus_observables(p.geometry, r, 20, 11);
            auto check = rp_gram(p, r, obs);
            CHECK(check.min_eigenvalue >= -1e-8);
            CHECK(check.symmetry_deviation <= 1e-10);
            CHECK(check.cauchy_schwarz_violation <= 1e-10);
        }
    }
}

TEST_CASE("rp gram rejects observables outside T+") {
    GibbsParams p{lattice::build_torus(2, 2), 0.5, -1.0, 1.0};
    const auto r = lattice::Reflection::through_edge(0, 0);
    auto [plus, minus] = lattice::reflection_halves(p.geometry, r);
    const int bad_site = minus.vertices().front();
    CHECK_THROWS_AS(rp_gram(p, r, {DiagObservable{1.0, {bad_site}}}), std::invalid_argument);
}
