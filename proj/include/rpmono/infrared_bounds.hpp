#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpmono::infrared {

/// Lattice dispersion epsilon(k) = 2 sum_i (1 - cos k_i), range [0, 4d].
inline double epsilon_dispersion(std::span<const double> k) {
    double acc = 0.0;
    for (double ki : k) acc += 1.0 - std::cos(ki);
    return 2.0 * acc;
}

namespace detail {

inline double multiset_permutations(const std::vector<int>& sorted_tuple) {
    double perms = 1.0;
    int run = 1;
    for (std::size_t i = 1; i <= sorted_tuple.size(); ++i) {
        if (i < sorted_tuple.size() && sorted_tuple[i] == sorted_tuple[i - 1]) {
            ++run;
        } else {
            for (int j = 2; j <= run; ++j) perms /= j;
            run = 1;
        }
    }
    for (std::size_t j = 2; j <= sorted_tuple.size(); ++j) perms *= static_cast<double>(j);
    return perms;
}

} // namespace detail

/// J_{d,L} = (1/L^d) sum_{k in dual lattice \ {0}} sqrt(eps(k + pi) / eps(k)).
/// The k = pi term has eps(k + pi) = 0 and is dropped structurally (by index,
/// not by floating-point tolerance). Momenta are folded by the per-coordinate
/// reflection n -> L - n and coordinate permutations, so the cost is the
/// number of sorted tuples over {0..L/2} rather than L^d.
inline double j_sum(int d, int L) {
    if (d < 1) throw std::invalid_argument("dimension must be >= 1");
    if (L < 2 || L % 2 != 0) throw std::invalid_argument("L must be even and >= 2");
    const int half = L / 2;
    std::vector<double> c(static_cast<std::size_t>(half) + 1);
    constexpr double two_pi = 6.283185307179586476925287;
    for (int n = 0; n <= half; ++n) c[static_cast<std::size_t>(n)] = std::cos(two_pi * n / L);

    double total = 0.0;
    std::vector<int> tuple(static_cast<std::size_t>(d));
    // enumerate non-decreasing tuples recursively
    auto rec = [&](auto&& self, int pos, int low, double sum_minus, double sum_plus,
                   int interior) -> void {
        if (pos == d) {
            const bool is_zero = tuple.back() == 0;           // all entries zero
            const bool is_pi = tuple.front() == half;          // all entries L/2
            if (is_zero || is_pi) return;                      // k = 0 excluded; k = pi term is 0
            const double eps_den = 2.0 * (d - sum_minus);      // eps(k)
            const double eps_num = 2.0 * (d + sum_minus);      // eps(k + pi)
            (void)sum_plus;
            const double mult = detail::multiset_permutations(tuple) *
                                std::pow(2.0, interior);
            total += mult * std::sqrt(eps_num / eps_den);
            return;
        }
        for (int n = low; n <= half; ++n) {
            tuple[static_cast<std::size_t>(pos)] = n;
            const int inter = (n > 0 && n < half) ? 1 : 0;
            self(self, pos + 1, n, sum_minus + c[static_cast<std::size_t>(n)],
                 sum_plus - c[static_cast<std::size_t>(n)], interior + inter);
        }
    };
    rec(rec, 0, 0, 0.0, 0.0, 0);
    return total / std::pow(static_cast<double>(L), d);
}

/// Direct enumeration over the full dual lattice; cross-check oracle for the
/// folded sum, only usable at small L^d.
inline double j_sum_direct(int d, int L) {
    const int half = L / 2;
    constexpr double two_pi = 6.283185307179586476925287;
    std::vector<double> c(static_cast<std::size_t>(L));
    for (int n = 0; n < L; ++n) c[static_cast<std::size_t>(n)] = std::cos(two_pi * n / L);
    std::int64_t count = 1;
    for (int i = 0; i < d; ++i) count *= L;
    double total = 0.0;
    std::vector<int> n(static_cast<std::size_t>(d), 0);
    for (std::int64_t idx = 1; idx < count; ++idx) {  // skip k = 0
        std::int64_t rem = idx;
        bool is_pi = true;
        double sum_cos = 0.0;
        for (int i = 0; i < d; ++i) {
            n[static_cast<std::size_t>(i)] = static_cast<int>(rem % L);
            rem /= L;
            if (n[static_cast<std::size_t>(i)] != half) is_pi = false;
            sum_cos += c[static_cast<std::size_t>(n[static_cast<std::size_t>(i)])];
        }
        if (is_pi) continue;
        total += std::sqrt((d + sum_cos) / (d - sum_cos));
    }
    return total / static_cast<double>(count);
}

struct JLimit {
    double value = 0.0;
    double achieved_tol = 0.0;
    bool converged = false;
    int last_L = 0;
    std::vector<double> lattice_sums;
};

/// L -> infinity extrapolation of J_{d,L} over L in {16, 32, 64, ...} by
/// two-point Richardson steps with the rate measured from the last three
/// sums; stops when successive extrapolants agree within tol.
inline JLimit j_limit(int d, double tol) {
    if (d < 2) throw std::invalid_argument("j_limit requires d >= 2");
    if (tol < 1e-10) throw std::invalid_argument("tolerance too small");
    const int max_L = d <= 3 ? 512 : (d <= 5 ? 128 : 64);
    JLimit out;
    std::vector<double> js;
    double prev_extrap = 0.0;
    bool have_prev = false;
    for (int L = 16; L <= max_L; L *= 2) {
        js.push_back(j_sum(d, L));
        out.last_L = L;
        if (js.size() < 2) continue;
        const double jl = js[js.size() - 2], j2l = js.back();
        double rate = 2.0;
        if (js.size() >= 3) {
            const double num = js[js.size() - 3] - jl;
            const double den = jl - j2l;
            if (den != 0.0 && num / den > 1.0) rate = std::log2(num / den);
        }
        const double extrap = j2l + (j2l - jl) / (std::pow(2.0, rate) - 1.0);
        if (have_prev && std::abs(extrap - prev_extrap) < tol) {
            out.value = extrap;
            out.achieved_tol = std::abs(extrap - prev_extrap);
            out.converged = true;
            out.lattice_sums = js;
            return out;
        }
        prev_extrap = extrap;
        have_prev = true;
    }
    out.value = prev_extrap;
    out.achieved_tol = tol;
    out.converged = false;
    out.lattice_sums = js;
    return out;
}

/// c1 >= M - (sqrt(1-u)/2) sqrt(M) J with M = S(S+1)/3; the Cesaro lower
/// bound entering the infrared argument.
inline double c1_bound(double S, double u, double J) {
    if (u > 0.0) throw std::invalid_argument("c1 bound requires u <= 0");
    const double M = S * (S + 1.0) / 3.0;
    return M - 0.5 * std::sqrt(1.0 - u) * std::sqrt(M) * J;
}

enum class ThresholdConvention {
    vertex_sq,  // (1/2 - eps)^{-2d}; reproduces the quoted Q values 8 and 11
    edge_sq     // (1/4 - eps/2)^{-2d}; the exponent as printed in the proof
};

inline const char* to_string(ThresholdConvention c) {
    return c == ThresholdConvention::vertex_sq ? "vertex_sq" : "edge_sq";
}

struct ThresholdResult {
    double min_spin = 0.0;
    double margin = 0.0;          // S^2 + S - threshold at the minimal spin
    double margin_below = 0.0;    // same at minimal spin - 1/2 (<= 0)
    double coefficient = 0.0;     // the (..)^{-2d} factor used
    ThresholdConvention convention = ThresholdConvention::vertex_sq;
    bool matches_paper_q = true;  // edge_sq does not reproduce Q(0,3) = 8
};

/// Smallest half-integer S with S^2 + S - (3/4)(1-u) J^2 C > 0, where C is
/// the squared amplification coefficient of the chosen convention.
inline ThresholdResult min_spin_threshold(double u, int d, double J,
                                          ThresholdConvention conv, double eps = 0.0) {
    if (u > 0.0) throw std::invalid_argument("threshold requires u <= 0");
    if (eps < 0.0 || eps >= 0.5) throw std::invalid_argument("eps must lie in [0, 1/2)");
    const double base = conv == ThresholdConvention::vertex_sq ? (0.5 - eps) : (0.25 - 0.5 * eps);
    const double coeff = std::pow(base, -2.0 * d);
    const double threshold = 0.75 * (1.0 - u) * J * J * coeff;
    ThresholdResult out;
    out.coefficient = coeff;
    out.convention = conv;
    out.matches_paper_q = conv == ThresholdConvention::vertex_sq;
    for (double S = 0.5; S <= 20000.0; S += 0.5) {
        if (S * S + S - threshold > 0.0) {
            out.min_spin = S;
            out.margin = S * S + S - threshold;
            const double Sb = S - 0.5;
            out.margin_below = Sb > 0.0 ? Sb * Sb + Sb - threshold : -threshold;
            return out;
        }
    }
    throw std::runtime_error("no spin below the scan cap satisfies the threshold");
}

struct IRReport {
    int d = 0;
    int L = 0;                 // 0 means extrapolated
    bool extrapolated = false;
    double J = 0.0;
    double S = 0.0;
    double u = 0.0;
    double c1 = 0.0;
    double M = 0.0;
    ThresholdConvention convention = ThresholdConvention::vertex_sq;
    double min_spin = 0.0;
};

} // namespace rpmono::infrared
