#include <doctest.h>

#include <Eigen/Dense>
#include <complex>

#include "rpmono/rng.hpp"
#include "rpmono/spin_algebra.hpp"

using namespace rpmono;
using namespace rpmono::spin;
using Complex = std::complex<double>;

namespace {

double max_abs(const MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("spin matrix defining relations for S up to 2") {
    const Complex im(0, 1);
    for (double S : {0.5, 1.0, 1.5, 2.0}) {
        const auto m = spin_matrices(S);
        const int q = local_dim(S);
        const MatrixXcd id = MatrixXcd::Identity(q, q);
        CHECK(max_abs(m.s1 * m.s2 - m.s2 * m.s1 - im * m.s3) <= 1e-12);
        CHECK(max_abs(m.s2 * m.s3 - m.s3 * m.s2 - im * m.s1) <= 1e-12);
        CHECK(max_abs(m.s3 * m.s1 - m.s1 * m.s3 - im * m.s2) <= 1e-12);
        CHECK(max_abs(m.s1 * m.s1 + m.s2 * m.s2 + m.s3 * m.s3 - S * (S + 1) * id) <= 1e-12);
        // hermitian, correct spectrum
        for (const auto* mat : {&m.s1, &m.s2, &m.s3}) {
            CHECK(max_abs(*mat - mat->adjoint()) <= 1e-12);
            Eigen::SelfAdjointEigenSolver<MatrixXcd> es(*mat, Eigen::EigenvaluesOnly);
            for (int i = 0; i < q; ++i)
                CHECK(std::abs(es.eigenvalues()(i) - (-S + i)) <= 1e-12);
        }
        // trace identities
        CHECK(std::abs(m.s3.trace()) <= 1e-12);
        CHECK(std::abs((m.s3 * m.s3).trace().real() - S * (S + 1) * (2 * S + 1) / 3.0) <= 1e-12);
    }
}

TEST_CASE("S=1/2 basis convention") {
    const auto m = spin_matrices(0.5);
    CHECK(m.s3(0, 0) == Complex(0.5, 0));
    CHECK(m.s3(1, 1) == Complex(-0.5, 0));
    // S1 real symmetric, S2 purely imaginary antisymmetric
    CHECK(m.s1(0, 1).imag() == 0.0);
    CHECK(m.s2(0, 1).real() == 0.0);
}

TEST_CASE("invalid spins are rejected") {
    CHECK_THROWS_AS(spin_matrices(0.3), std::invalid_argument);
    CHECK_THROWS_AS(spin_matrices(0.0), std::invalid_argument);
    CHECK_THROWS_AS(spin_matrices(-0.5), std::invalid_argument);
}

namespace {

/// dense Kronecker-product oracle: local operator at `site` in a 2-site space
MatrixXcd kron2(const MatrixXcd& a, const MatrixXcd& b) {
    // index = digit0 + q*digit1 with site 0 the fastest digit: the FIRST
    // factor acts on the slower digit
    const int qa = static_cast<int>(a.rows()), qb = static_cast<int>(b.rows());
    MatrixXcd out(qa * qb, qa * qb);
    for (int i = 0; i < qa; ++i)
        for (int j = 0; j < qa; ++j)
            for (int k = 0; k < qb; ++k)
                for (int l = 0; l < qb; ++l) out(i * qb + k, j * qb + l) = a(i, j) * b(k, l);
    return out;
}

} // namespace

TEST_CASE("apply_site_operator matches the Kronecker oracle") {
    const double S = 0.5;
    const auto m = spin_matrices(S);
    const int q = local_dim(S);
    const MatrixXcd id = MatrixXcd::Identity(q, q);

    // basis |up,up> is index 0 (digit 0 = m=+S at both sites)
    std::vector<Complex> upup(4, Complex(0, 0));
    upup[0] = 1.0;
    auto out = apply_site_operator({0, LocalOperator::s3, S}, 2, upup);
    CHECK(std::abs(out[0] - Complex(0.5, 0)) <= 1e-15);

    auto same = apply_site_operator({1, LocalOperator::identity, S}, 2, upup);
    CHECK(same == upup);

    Rng rng(11);
    std::vector<Complex> v(4);
    for (auto& x : v) x = Complex(rng.gaussian(), rng.gaussian());

    // site 0 is the fast digit, so the oracle embeds it as Id (x) op
    const MatrixXcd oracle0 = kron2(id, m.s3);
    const MatrixXcd oracle1 = kron2(m.s3, id);
    auto a0 = apply_site_operator({0, LocalOperator::s3, S}, 2, v);
    auto a1 = apply_site_operator({1, LocalOperator::s3, S}, 2, v);
    for (int i = 0; i < 4; ++i) {
        Complex e0(0, 0), e1(0, 0);
        for (int j = 0; j < 4; ++j) {
            e0 += oracle0(i, j) * v[static_cast<std::size_t>(j)];
            e1 += oracle1(i, j) * v[static_cast<std::size_t>(j)];
        }
        CHECK(std::abs(a0[static_cast<std::size_t>(i)] - e0) <= 1e-12);
        CHECK(std::abs(a1[static_cast<std::size_t>(i)] - e1) <= 1e-12);
    }

    // operators on distinct sites commute
    auto ab = apply_site_operator({1, LocalOperator::s1, S}, 2,
                                  apply_site_operator({0, LocalOperator::s2, S}, 2, v));
    auto ba = apply_site_operator({0, LocalOperator::s2, S}, 2,
                                  apply_site_operator({1, LocalOperator::s1, S}, 2, v));
    for (int i = 0; i < 4; ++i)
        CHECK(std::abs(ab[static_cast<std::size_t>(i)] - ba[static_cast<std::size_t>(i)]) <= 1e-12);
}

TEST_CASE("apply_site_operator rejects dimension mismatch") {
    std::vector<Complex> v(3);
    CHECK_THROWS_AS(apply_site_operator({0, LocalOperator::s3, 0.5}, 2, v),
                    std::invalid_argument);
}
