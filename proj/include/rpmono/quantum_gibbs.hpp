#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rpmono/lattice.hpp"
#include "rpmono/rng.hpp"
#include "rpmono/spin_algebra.hpp"
#include "rpmono/two_point_table.hpp"

namespace rpmono::gibbs {

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Interaction graph for H_u. Multigraph: repeated pairs are doubled edges
/// and contribute twice to the Hamiltonian.
struct SpinGraph {
    int n_sites = 0;
    std::vector<std::pair<int, int>> edges;

    static SpinGraph from_torus(const lattice::TorusGeometry& g) {
        SpinGraph sg;
        sg.n_sites = g.vertex_count();
        for (const auto& e : g.edges()) sg.edges.emplace_back(e.u, e.v);
        return sg;
    }
};

struct GibbsParams {
    lattice::TorusGeometry geometry;
    double S = 0.5;
    double u = 0.0;   // in [-1, 1]; reflection positivity holds for u <= 0
    double beta = 1.0;
};

inline constexpr std::size_t kDenseCap = std::size_t(1) << 12;
inline constexpr std::size_t kStochasticCap = std::size_t(1) << 20;

inline std::size_t hilbert_dim(int n_sites, double S, std::size_t cap) {
    const int q = spin::local_dim(S);
    std::size_t dim = 1;
    for (int i = 0; i < n_sites; ++i) {
        if (dim > cap / static_cast<std::size_t>(q) + 1)
            throw CapacityError("Hilbert dimension exceeds cap");
        dim *= static_cast<std::size_t>(q);
    }
    if (dim > cap) throw CapacityError("Hilbert dimension exceeds cap");
    return dim;
}

struct TraceEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    int samples = 0;
    int degree = 0;
};

enum class PartitionMethod { dense, stochastic };

struct PartitionValue {
    double log_z = 0.0;
    PartitionMethod method = PartitionMethod::dense;
};

/// Matrix-free H_u = -2 sum_edges (S1 S1 + u S2 S2 + S3 S3). In the product
/// basis diagonalizing every S3 the Hamiltonian is real symmetric (S2 x S2
/// has real entries), so state vectors are real throughout.
class HamiltonianOp {
public:
    HamiltonianOp(const SpinGraph& graph, double S, double u,
                  std::size_t cap = kStochasticCap)
        : graph_(graph), S_(S), u_(u), q_(spin::local_dim(S)),
          dim_(hilbert_dim(graph.n_sites, S, cap)) {
        const auto m = spin::spin_matrices(S);
        const int qq = q_ * q_;
        Eigen::MatrixXd gate(qq, qq);
        for (int r = 0; r < qq; ++r)
            for (int c = 0; c < qq; ++c) {
                const int ra = r / q_, rb = r % q_, ca = c / q_, cb = c % q_;
                spin::Complex val = -2.0 * (m.s1(ra, ca) * m.s1(rb, cb) +
                                            u * m.s2(ra, ca) * m.s2(rb, cb) +
                                            m.s3(ra, ca) * m.s3(rb, cb));
                gate(r, c) = val.real();
            }
        // grouped by source column (da, db): out[i + (r - c)] += gate(r, c) in[i]
        cols_.resize(static_cast<std::size_t>(qq));
        for (int r = 0; r < qq; ++r)
            for (int c = 0; c < qq; ++c)
                if (gate(r, c) != 0.0)
                    cols_[static_cast<std::size_t>(c)].push_back(
                        {r / q_ - c / q_, r % q_ - c % q_, gate(r, c)});

        strides_.resize(static_cast<std::size_t>(graph.n_sites));
        std::size_t s = 1;
        for (int i = 0; i < graph.n_sites; ++i) {
            strides_[static_cast<std::size_t>(i)] = s;
            s *= static_cast<std::size_t>(q_);
        }
    }

    std::size_t dim() const { return dim_; }
    int q() const { return q_; }
    const SpinGraph& graph() const { return graph_; }
    double spin() const { return S_; }
    double anisotropy() const { return u_; }

    /// Rigorous operator norm bound 2 |E| (2 + |u|) S^2.
    double norm_bound() const {
        return 2.0 * static_cast<double>(graph_.edges.size()) * (2.0 + std::abs(u_)) * S_ * S_;
    }

    void apply(const double* in, double* out) const {
        std::fill(out, out + dim_, 0.0);
        accumulate(in, out, 1.0);
    }

    /// out += scale * H in
    void accumulate(const double* in, double* out, double scale) const {
        for (const auto& [x, y] : graph_.edges) {
            const std::size_t sa = strides_[static_cast<std::size_t>(std::min(x, y))];
            const std::size_t sb = strides_[static_cast<std::size_t>(std::max(x, y))];
            const std::size_t mid_count = sb / (sa * static_cast<std::size_t>(q_));
            const std::size_t hi_count = dim_ / (sb * static_cast<std::size_t>(q_));
            // da runs over the lower-stride site; the gate is symmetric under
            // swapping (a, b), so orientation does not matter
            for (std::size_t hi = 0; hi < hi_count; ++hi) {
                const std::size_t ihi = hi * sb * static_cast<std::size_t>(q_);
                for (int db = 0; db < q_; ++db) {
                    for (std::size_t mid = 0; mid < mid_count; ++mid) {
                        const std::size_t imid =
                            ihi + static_cast<std::size_t>(db) * sb +
                            mid * sa * static_cast<std::size_t>(q_);
                        for (int da = 0; da < q_; ++da) {
                            const auto& lst = cols_[static_cast<std::size_t>(da * q_ + db)];
                            const std::size_t ibase =
                                imid + static_cast<std::size_t>(da) * sa;
                            for (const auto& ent : lst) {
                                const std::ptrdiff_t off =
                                    static_cast<std::ptrdiff_t>(ent.da) *
                                        static_cast<std::ptrdiff_t>(sa) +
                                    static_cast<std::ptrdiff_t>(ent.db) *
                                        static_cast<std::ptrdiff_t>(sb);
                                const double v = scale * ent.val;
                                for (std::size_t lo = 0; lo < sa; ++lo)
                                    out[static_cast<std::size_t>(
                                        static_cast<std::ptrdiff_t>(ibase + lo) + off)] +=
                                        v * in[ibase + lo];
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<double> apply(const std::vector<double>& v) const {
        if (v.size() != dim_) throw std::invalid_argument("state vector dimension mismatch");
        std::vector<double> out(dim_);
        apply(v.data(), out.data());
        return out;
    }

    int site_digit(int site, std::size_t basis) const {
        return static_cast<int>((basis / strides_[static_cast<std::size_t>(site)]) %
                                static_cast<std::size_t>(q_));
    }

    double s3_value(int site, std::size_t basis) const {
        return S_ - static_cast<double>(site_digit(site, basis));
    }

private:
    struct Entry {
        int da;
        int db;
        double val;
    };
    SpinGraph graph_;
    double S_;
    double u_;
    int q_;
    std::size_t dim_;
    std::vector<std::vector<Entry>> cols_;  // gate nonzeros by source (da, db)
    std::vector<std::size_t> strides_;
};

inline std::vector<double> hamiltonian_apply(const GibbsParams& p,
                                             const std::vector<double>& v) {
    HamiltonianOp op(SpinGraph::from_torus(p.geometry), p.S, p.u);
    return op.apply(v);
}

struct SpectralBounds {
    double emin_estimate = 0.0;
    double emax_estimate = 0.0;
    double safety_margin = 0.0;
    double lo() const { return emin_estimate - safety_margin; }
    double hi() const { return emax_estimate + safety_margin; }
};

/// Extremal eigenvalue estimates by Lanczos iteration, inflated by 5% of the
/// estimated width and clipped to the rigorous norm bound. beta plays no role.
inline SpectralBounds spectral_bounds(const HamiltonianOp& op, int max_iter = 160,
                                      std::uint64_t seed = 12345) {
    const std::size_t n = op.dim();
    const double bound = op.norm_bound();
    double emin, emax;
    if (n <= 96) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<int>(n), static_cast<int>(n));
        std::vector<double> e(n, 0.0), col(n);
        for (std::size_t j = 0; j < n; ++j) {
            e[j] = 1.0;
            op.apply(e.data(), col.data());
            for (std::size_t i = 0; i < n; ++i) h(static_cast<int>(i), static_cast<int>(j)) = col[i];
            e[j] = 0.0;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
        emin = es.eigenvalues().minCoeff();
        emax = es.eigenvalues().maxCoeff();
    } else {
        Rng rng(seed);
        std::vector<double> v(n), w(n), prev(n, 0.0);
        for (auto& x : v) x = rng.gaussian();
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        for (auto& x : v) x /= nrm;
        std::vector<double> alpha, betas;
        double beta_prev = 0.0;
        const int m = std::min<std::size_t>(static_cast<std::size_t>(max_iter), n);
        for (int it = 0; it < m; ++it) {
            op.apply(v.data(), w.data());
            double a = 0.0;
            for (std::size_t i = 0; i < n; ++i) a += v[i] * w[i];
            alpha.push_back(a);
            for (std::size_t i = 0; i < n; ++i) w[i] -= a * v[i] + beta_prev * prev[i];
            double b = 0.0;
            for (double x : w) b += x * x;
            b = std::sqrt(b);
            if (b < 1e-12) break;
            betas.push_back(b);
            beta_prev = b;
            prev = v;
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
        }
        const int k = static_cast<int>(alpha.size());
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            t(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < k) {
                t(i, i + 1) = betas[static_cast<std::size_t>(i)];
                t(i + 1, i) = betas[static_cast<std::size_t>(i)];
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t, Eigen::EigenvaluesOnly);
        emin = es.eigenvalues().minCoeff();
        emax = es.eigenvalues().maxCoeff();
    }
    double width = std::max(emax - emin, 1e-8 + 1e-8 * bound);
    SpectralBounds sb;
    sb.safety_margin = 0.05 * width;
    sb.emin_estimate = std::max(emin, -bound);
    sb.emax_estimate = std::min(emax, bound);
    if (sb.lo() < -bound) sb.emin_estimate = -bound + sb.safety_margin;
    if (sb.hi() > bound) sb.emax_estimate = bound - sb.safety_margin;
    return sb;
}

inline SpectralBounds spectral_bounds(const GibbsParams& p) {
    HamiltonianOp op(SpinGraph::from_torus(p.geometry), p.S, p.u);
    return spectral_bounds(op);
}

// ---------------------------------------------------------------------------
// Dense engine
// ---------------------------------------------------------------------------

/// Full diagonalization of H_u plus the diagonal of the Gibbs density matrix
/// in the product basis. All observables used here (products of S3 factors)
/// are diagonal, so expectations reduce to sums against rho_diag.
class DenseGibbs {
public:
    DenseGibbs(const SpinGraph& graph, double S, double u, double beta,
               std::size_t cap = kDenseCap)
        : op_(graph, S, u, cap), beta_(beta) {
        const auto n = static_cast<int>(op_.dim());
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
        std::vector<double> e(op_.dim(), 0.0), col(op_.dim());
        for (int j = 0; j < n; ++j) {
            e[static_cast<std::size_t>(j)] = 1.0;
            op_.apply(e.data(), col.data());
            for (int i = 0; i < n; ++i) h(i, j) = col[static_cast<std::size_t>(i)];
            e[static_cast<std::size_t>(j)] = 0.0;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        evals_ = es.eigenvalues();
        evecs_ = es.eigenvectors();
        const double e0 = evals_.minCoeff();
        Eigen::VectorXd boltz = (-(beta) * (evals_.array() - e0)).exp().matrix();
        const double zshift = boltz.sum();
        log_z_ = std::log(zshift) - beta * e0;
        rho_diag_ = (evecs_.array().square().matrix() * boltz) / zshift;
    }

    const HamiltonianOp& op() const { return op_; }
    double beta() const { return beta_; }
    const Eigen::VectorXd& eigenvalues() const { return evals_; }
    PartitionValue partition() const { return {log_z_, PartitionMethod::dense}; }

    /// <D> for a diagonal observable given by its basis values.
    double diag_expectation(const std::vector<double>& diag) const {
        double acc = 0.0;
        for (std::size_t a = 0; a < diag.size(); ++a)
            acc += diag[a] * rho_diag_(static_cast<int>(a));
        return acc;
    }

    /// G(x, y) = Tr(S3_x S3_y e^{-beta H}) / Z
    double two_point(int x, int y) const {
        double acc = 0.0;
        for (std::size_t a = 0; a < op_.dim(); ++a)
            acc += op_.s3_value(x, a) * op_.s3_value(y, a) * rho_diag_(static_cast<int>(a));
        return acc;
    }

    Eigen::MatrixXd two_point_matrix() const {
        const int m = op_.graph().n_sites;
        Eigen::MatrixXd g(m, m);
        for (int x = 0; x < m; ++x)
            for (int y = x; y < m; ++y) g(x, y) = g(y, x) = two_point(x, y);
        return g;
    }

private:
    HamiltonianOp op_;
    double beta_;
    Eigen::VectorXd evals_;
    Eigen::MatrixXd evecs_;
    Eigen::VectorXd rho_diag_;
    double log_z_;
};

/// Raw (no translation averaging) table G(o, x) by exact diagonalization.
inline TwoPointTable dense_correlations(const GibbsParams& p, std::size_t cap = kDenseCap) {
    DenseGibbs dg(SpinGraph::from_torus(p.geometry), p.S, p.u, p.beta, cap);
    TwoPointTable t(p.geometry.sides(), Provenance::dense);
    for (int x = 0; x < p.geometry.vertex_count(); ++x)
        t.values[static_cast<std::size_t>(x)] = dg.two_point(0, x);
    return t;
}

// ---------------------------------------------------------------------------
// Stochastic (typicality) engine
// ---------------------------------------------------------------------------

/// Chebyshev coefficients of f(x) = exp(-(beta/2)(center + half x)) on
/// [-1, 1], by Chebyshev-Gauss quadrature.
inline std::vector<double> chebyshev_exp_coeffs(double beta, double center, double half,
                                                int degree) {
    const int npts = 2 * (degree + 1);
    std::vector<double> fv(static_cast<std::size_t>(npts));
    constexpr double pi = 3.141592653589793238462643;
    for (int j = 0; j < npts; ++j) {
        const double theta = pi * (j + 0.5) / npts;
        fv[static_cast<std::size_t>(j)] =
            std::exp(-(beta / 2.0) * (center + half * std::cos(theta)));
    }
    std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
    for (int k = 0; k <= degree; ++k) {
        double acc = 0.0;
        for (int j = 0; j < npts; ++j)
            acc += fv[static_cast<std::size_t>(j)] * std::cos(k * pi * (j + 0.5) / npts);
        c[static_cast<std::size_t>(k)] = (k == 0 ? 1.0 : 2.0) * acc / npts;
    }
    return c;
}

inline bool chebyshev_tail_ok(const std::vector<double>& c, double rel_tol = 1e-12) {
    double maxc = 0.0;
    for (double v : c) maxc = std::max(maxc, std::abs(v));
    if (!(maxc > 0.0) || !std::isfinite(maxc)) return false;
    const std::size_t n = c.size();
    const std::size_t tail = n >= 3 ? 3 : n;
    double t = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) t = std::max(t, std::abs(c[i]));
    return t <= rel_tol * maxc;
}

/// Degree with coefficient tail below 1e-12 relative; grows geometrically
/// from a Bessel-decay first guess. Also used to validate a caller-pinned
/// degree (throws when the tail test fails).
inline std::pair<int, std::vector<double>> select_chebyshev(double beta, double center,
                                                            double half, int degree) {
    if (degree > 0) {
        auto c = chebyshev_exp_coeffs(beta, center, half, degree);
        if (!chebyshev_tail_ok(c))
            throw std::invalid_argument("chebyshev degree too small for requested beta");
        return {degree, std::move(c)};
    }
    const double s = beta * half / 2.0;
    int d = std::max(8, static_cast<int>(std::ceil(1.4 * s + 40.0)));
    for (;;) {
        auto c = chebyshev_exp_coeffs(beta, center, half, d);
        if (chebyshev_tail_ok(c)) return {d, std::move(c)};
        if (d > 200000)
            throw std::invalid_argument("chebyshev expansion failed to converge (beta too large?)");
        d = d + d / 2 + 16;
    }
}

/// w = e^{-beta H / 2} r via the Chebyshev recurrence on the scaled operator.
inline void propagate_half_gibbs(const HamiltonianOp& op, const std::vector<double>& coeff,
                                 double center, double half, const std::vector<double>& r,
                                 std::vector<double>& w) {
    const std::size_t n = op.dim();
    std::vector<double> t0(r), t1(n), hx(n);
    auto scaled_apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        op.apply(in.data(), hx.data());
        for (std::size_t i = 0; i < n; ++i) out[i] = (hx[i] - center * in[i]) / half;
    };
    w.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i] = coeff[0] * t0[i];
    if (coeff.size() == 1) return;
    scaled_apply(t0, t1);
    for (std::size_t i = 0; i < n; ++i) w[i] += coeff[1] * t1[i];
    std::vector<double> t2(n);
    for (std::size_t k = 2; k < coeff.size(); ++k) {
        scaled_apply(t1, t2);
        for (std::size_t i = 0; i < n; ++i) {
            t2[i] = 2.0 * t2[i] - t0[i];
            w[i] += coeff[k] * t2[i];
        }
        std::swap(t0, t1);
        std::swap(t1, t2);
    }
}

struct StochasticResult {
    TwoPointTable table;
    TraceEstimate z_trace;  // Tr e^{-beta H} over the Hilbert dimension scale
    PartitionValue partition;
    int degree_used = 0;
    SpectralBounds bounds;
};

/// Typicality estimator: R Gaussian vectors propagated through e^{-beta H/2};
/// the table is the ratio estimator <w, S3_x S3_o w> / <w, w> with jackknife
/// standard errors. Deterministic given (seed, R, degree); sample streams are
/// hashed from the seed so the thread schedule cannot change results.
inline StochasticResult stochastic_correlations(const GibbsParams& p, int R, int degree,
                                                std::uint64_t seed, int threads = 0,
                                                std::size_t cap = kStochasticCap) {
    if (R < 2) throw std::invalid_argument("stochastic estimator requires R >= 2");
    HamiltonianOp op(SpinGraph::from_torus(p.geometry), p.S, p.u, cap);
    const std::size_t n = op.dim();
    const int nv = p.geometry.vertex_count();

    const auto sb = spectral_bounds(op);
    const double center = 0.5 * (sb.hi() + sb.lo());
    const double half = std::max(0.5 * (sb.hi() - sb.lo()), 1e-12);
    auto [deg, coeff] = select_chebyshev(p.beta, center, half, degree);

    std::vector<std::vector<double>> num(static_cast<std::size_t>(R));
    std::vector<double> den(static_cast<std::size_t>(R), 0.0);

    // per-site digit tables keep the accumulation free of divisions
    std::vector<std::vector<double>> s3tab(static_cast<std::size_t>(nv));
    for (int x = 0; x < nv; ++x) {
        auto& tab = s3tab[static_cast<std::size_t>(x)];
        tab.resize(n);
        for (std::size_t a = 0; a < n; ++a) tab[a] = op.s3_value(x, a);
    }

    const int nthreads =
        threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    auto worker = [&]() {
        std::vector<double> r(n), w(n);
        for (;;) {
            const int j = next.fetch_add(1);
            if (j >= R) break;
            Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(j));
            for (auto& x : r) x = rng.gaussian();
            propagate_half_gibbs(op, coeff, center, half, r, w);
            double d = 0.0;
            for (double x : w) d += x * x;
            den[static_cast<std::size_t>(j)] = d;
            auto& nj = num[static_cast<std::size_t>(j)];
            nj.assign(static_cast<std::size_t>(nv), 0.0);
            const auto& s3o = s3tab[0];
            for (std::size_t a = 0; a < n; ++a) {
                const double w2 = w[a] * w[a] * s3o[a];
                for (int x = 0; x < nv; ++x)
                    nj[static_cast<std::size_t>(x)] += s3tab[static_cast<std::size_t>(x)][a] * w2;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, nthreads); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // ratio estimator with jackknife errors, reduced in sample order
    double dsum = 0.0;
    std::vector<double> nsum(static_cast<std::size_t>(nv), 0.0);
    for (int j = 0; j < R; ++j) {
        dsum += den[static_cast<std::size_t>(j)];
        for (int x = 0; x < nv; ++x)
            nsum[static_cast<std::size_t>(x)] += num[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)];
    }

    TwoPointTable table(p.geometry.sides(), Provenance::stochastic);
    table.stderrs = std::vector<double>(static_cast<std::size_t>(nv), 0.0);
    for (int x = 0; x < nv; ++x) {
        const double full = nsum[static_cast<std::size_t>(x)] / dsum;
        double jmean = 0.0;
        std::vector<double> loo(static_cast<std::size_t>(R));
        for (int j = 0; j < R; ++j) {
            loo[static_cast<std::size_t>(j)] =
                (nsum[static_cast<std::size_t>(x)] - num[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)]) /
                (dsum - den[static_cast<std::size_t>(j)]);
            jmean += loo[static_cast<std::size_t>(j)];
        }
        jmean /= R;
        double var = 0.0;
        for (int j = 0; j < R; ++j) {
            const double ddd = loo[static_cast<std::size_t>(j)] - jmean;
            var += ddd * ddd;
        }
        var *= static_cast<double>(R - 1) / static_cast<double>(R);
        table.values[static_cast<std::size_t>(x)] = full;
        (*table.stderrs)[static_cast<std::size_t>(x)] = std::sqrt(var);
    }

    StochasticResult res{std::move(table), {}, {}, deg, sb};
    double zm = dsum / R;
    double zvar = 0.0;
    for (int j = 0; j < R; ++j) {
        const double dd = den[static_cast<std::size_t>(j)] - zm;
        zvar += dd * dd;
    }
    zvar /= (R > 1 ? (R - 1) : 1);
    res.z_trace = {zm, std::sqrt(zvar / R), R, deg};
    res.partition = {std::log(zm), PartitionMethod::stochastic};
    return res;
}

// ---------------------------------------------------------------------------
// Reflection-positivity Gram check (dense only)
// ---------------------------------------------------------------------------

/// coeff * product of S3 over `sites` (possibly empty = coeff * identity).
struct DiagObservable {
    double coeff = 1.0;
    std::vector<int> sites;
};

struct GramCheck {
    Eigen::MatrixXd gram;
    double min_eigenvalue = 0.0;
    double symmetry_deviation = 0.0;      // max |<A theta B> - <B theta A>|
    double cauchy_schwarz_violation = 0.0;  // max <AtB>^2 - <AtA><BtB>
};

/// Gram matrix M_ab = <A_a theta A_b> in the Gibbs state, theta moving the
/// S3 factors to the reflected sites. Reflection positivity (u <= 0, edge
/// reflections) predicts M is PSD.
inline GramCheck rp_gram(const GibbsParams& p, const lattice::Reflection& r,
                         const std::vector<DiagObservable>& obs,
                         std::size_t cap = kDenseCap) {
    const auto& g = p.geometry;
    auto [plus, minus] = lattice::reflection_halves(g, r);
    for (const auto& a : obs)
        for (int s : a.sites)
            if (!plus.contains(s))
                throw std::invalid_argument("observable domain not contained in T+");

    DenseGibbs dg(SpinGraph::from_torus(g), p.S, p.u, p.beta, cap);
    const std::size_t dim = dg.op().dim();
    const int m = static_cast<int>(obs.size());

    // basis-diagonal values of each A_a and each theta A_a
    std::vector<std::vector<double>> av(static_cast<std::size_t>(m)),
        tv(static_cast<std::size_t>(m));
    for (int a = 0; a < m; ++a) {
        av[static_cast<std::size_t>(a)].assign(dim, obs[static_cast<std::size_t>(a)].coeff);
        tv[static_cast<std::size_t>(a)].assign(dim, obs[static_cast<std::size_t>(a)].coeff);
        for (int s : obs[static_cast<std::size_t>(a)].sites) {
            const int rs = lattice::reflect_vertex(g, r, s);
            for (std::size_t b = 0; b < dim; ++b) {
                av[static_cast<std::size_t>(a)][b] *= dg.op().s3_value(s, b);
                tv[static_cast<std::size_t>(a)][b] *= dg.op().s3_value(rs, b);
            }
        }
    }

    GramCheck out;
    out.gram.resize(m, m);
    std::vector<double> prod(dim);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            for (std::size_t i = 0; i < dim; ++i)
                prod[i] = av[static_cast<std::size_t>(a)][i] * tv[static_cast<std::size_t>(b)][i];
            out.gram(a, b) = dg.diag_expectation(prod);
        }

    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            out.symmetry_deviation =
                std::max(out.symmetry_deviation, std::abs(out.gram(a, b) - out.gram(b, a)));
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            out.cauchy_schwarz_violation =
                std::max(out.cauchy_schwarz_violation,
                         out.gram(a, b) * out.gram(a, b) - out.gram(a, a) * out.gram(b, b));

    Eigen::MatrixXd sym = 0.5 * (out.gram + out.gram.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    return out;
}

inline double rp_gram_min_eig(const GibbsParams& p, const lattice::Reflection& r,
                              const std::vector<DiagObservable>& obs) {
    return rp_gram(p, r, obs).min_eigenvalue;
}

/// Random +-1-coefficient products of S3 over random subsets of T+.
inline std::vector<DiagObservable> random_plus_observables(const lattice::TorusGeometry& g,
                                                           const lattice::Reflection& r,
                                                           int count, std::uint64_t seed) {
    auto [plus, minus] = lattice::reflection_halves(g, r);
    const auto verts = plus.vertices();
    std::vector<DiagObservable> obs;
    Rng rng(seed);
    obs.push_back({1.0, {}});  // the identity; <1> = 1 pins the Gram scale
    while (static_cast<int>(obs.size()) < count) {
        DiagObservable o;
        o.coeff = rng.coin() ? 1.0 : -1.0;
        for (int v : verts)
            if (rng.coin()) o.sites.push_back(v);
        obs.push_back(std::move(o));
    }
    return obs;
}

} // namespace rpmono::gibbs
