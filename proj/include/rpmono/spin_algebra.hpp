#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rpmono::spin {

using Complex = std::complex<double>;
using MatrixXcd = Eigen::MatrixXcd;

inline bool is_half_integer_spin(double S) {
    double twoS = 2.0 * S;
    return S > 0.0 && std::abs(twoS - std::round(twoS)) < 1e-12;
}

inline int local_dim(double S) { return static_cast<int>(std::lround(2.0 * S)) + 1; }

/// Spin-S matrices in the basis diagonalizing S3, eigenvalues descending
/// (S3 = diag(S, S-1, ..., -S)). S1 is real symmetric, S2 purely imaginary
/// antisymmetric; the commutation relations [S1,S2] = i S3 (and cyclic) and
/// the Casimir S1^2+S2^2+S3^2 = S(S+1) Id fix them up to unitary equivalence.
struct SpinMatrices {
    double S;
    MatrixXcd s1, s2, s3;
};

inline SpinMatrices spin_matrices(double S) {
    if (!is_half_integer_spin(S))
        throw std::invalid_argument("S must be a positive half-integer");
    const int q = local_dim(S);
    MatrixXcd sp = MatrixXcd::Zero(q, q);  // raising operator
    for (int m = 1; m < q; ++m) {
        const double mz = S - m;  // S+ maps |m z> to |m z + 1>
        sp(m - 1, m) = std::sqrt(S * (S + 1) - mz * (mz + 1));
    }
    SpinMatrices out;
    out.S = S;
    MatrixXcd sm = sp.adjoint();
    out.s1 = 0.5 * (sp + sm);
    out.s2 = Complex(0, -0.5) * (sp - sm);
    out.s3 = MatrixXcd::Zero(q, q);
    for (int m = 0; m < q; ++m) out.s3(m, m) = S - m;
    return out;
}

enum class LocalOperator { s1, s2, s3, identity };

/// Single-site operator embedded into the many-body space: acts as the local
/// matrix on site `site` and as the identity elsewhere.
struct SiteOperator {
    int site;
    LocalOperator local;
    double S;
};

/// out = (local operator at op.site) applied to v, without materializing any
/// global matrix. Site digits are coded base 2S+1, site 0 fastest; cost is
/// O(dim * (2S+1)).
inline std::vector<Complex> apply_site_operator(const SiteOperator& op, int n_sites,
                                                const std::vector<Complex>& v) {
    const int q = local_dim(op.S);
    std::size_t dim = 1;
    for (int i = 0; i < n_sites; ++i) dim *= static_cast<std::size_t>(q);
    if (v.size() != dim) throw std::invalid_argument("state vector dimension mismatch");
    if (op.local == LocalOperator::identity) return v;

    const auto mats = spin_matrices(op.S);
    const MatrixXcd& m = op.local == LocalOperator::s1   ? mats.s1
                         : op.local == LocalOperator::s2 ? mats.s2
                                                         : mats.s3;
    std::size_t stride = 1;
    for (int i = 0; i < op.site; ++i) stride *= static_cast<std::size_t>(q);

    std::vector<Complex> out(dim, Complex(0, 0));
    const std::size_t block = stride * static_cast<std::size_t>(q);
    for (std::size_t base = 0; base < dim; base += block) {
        for (std::size_t low = 0; low < stride; ++low) {
            for (int a = 0; a < q; ++a) {
                Complex acc(0, 0);
                for (int b = 0; b < q; ++b)
                    acc += m(a, b) * v[base + low + static_cast<std::size_t>(b) * stride];
                out[base + low + static_cast<std::size_t>(a) * stride] = acc;
            }
        }
    }
    return out;
}

/// S3 eigenvalue of site digit `digit` (basis state labels run from m = S
/// at digit 0 down to m = -S).
inline double s3_of_digit(double S, int digit) { return S - digit; }

} // namespace rpmono::spin
