#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpmono/lattice.hpp"

namespace rpmono {

enum class Provenance { dense, stochastic, enumeration, monte_carlo, synthetic };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::dense: return "dense";
        case Provenance::stochastic: return "stochastic";
        case Provenance::enumeration: return "enumeration";
        case Provenance::monte_carlo: return "monte_carlo";
        case Provenance::synthetic: return "synthetic";
    }
    return "?";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "dense") return Provenance::dense;
    if (s == "stochastic") return Provenance::stochastic;
    if (s == "enumeration") return Provenance::enumeration;
    if (s == "monte_carlo") return Provenance::monte_carlo;
    if (s == "synthetic") return Provenance::synthetic;
    throw std::invalid_argument("unknown provenance: " + s);
}

/// Values G(o, x) for every vertex x, the common currency between the
/// engines and the checker. Vertex order follows TorusGeometry indexing.
/// Crossing-kind RPM tables carry the connection probability alongside.
struct TwoPointTable {
    std::vector<int> sides;
    Provenance provenance = Provenance::synthetic;
    std::vector<double> values;
    std::optional<std::vector<double>> stderrs;
    std::optional<std::vector<double>> p_connect;
    std::optional<std::vector<double>> p_stderr;

    TwoPointTable() = default;
    TwoPointTable(std::vector<int> sides_, Provenance prov)
        : sides(std::move(sides_)), provenance(prov) {
        int n = 1;
        for (int l : sides) n *= l;
        values.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    }

    int dim() const { return static_cast<int>(sides.size()); }
    int vertex_count() const { return static_cast<int>(values.size()); }

    lattice::TorusGeometry geometry() const { return lattice::build_torus(sides); }

    bool complete() const {
        for (double v : values)
            if (std::isnan(v)) return false;
        return true;
    }

    double stderr_at(int x) const {
        return stderrs ? (*stderrs)[static_cast<std::size_t>(x)] : 0.0;
    }
    bool has_stderr() const { return stderrs.has_value(); }
};

/// Arithmetic mean of G(o, x) over the torus; the standard error is
/// propagated in quadrature when present.
inline std::pair<double, double> cesaro_sum(const TwoPointTable& t) {
    if (!t.complete()) throw std::invalid_argument("cesaro_sum requires a complete table");
    double sum = 0.0, var = 0.0;
    for (int x = 0; x < t.vertex_count(); ++x) {
        sum += t.values[static_cast<std::size_t>(x)];
        double se = t.stderr_at(x);
        var += se * se;
    }
    const double n = static_cast<double>(t.vertex_count());
    return {sum / n, std::sqrt(var) / n};
}

namespace detail {

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

/// rpmono-table v1:
///   # rpmono-table v1
///   d,LxLx...,provenance
///   x1,...,xd,G,stderr[,p_connect,p_stderr]
/// Values carry 17 significant digits so the round trip is bit-exact;
/// absent stderr fields are left empty.
inline void write_csv(std::ostream& os, const TwoPointTable& t) {
    os << "# rpmono-table v1\n";
    os << t.dim() << ",";
    const bool cubic = t.geometry().is_cubic();
    if (cubic) {
        os << t.sides[0];
    } else {
        for (int i = 0; i < t.dim(); ++i)
            os << (i ? "x" : "") << t.sides[static_cast<std::size_t>(i)];
    }
    os << "," << to_string(t.provenance) << "\n";
    const auto g = t.geometry();
    for (int x = 0; x < t.vertex_count(); ++x) {
        for (int i = 0; i < t.dim(); ++i) os << g.coord(x, i) << ",";
        os << detail::fmt17(t.values[static_cast<std::size_t>(x)]);
        os << ",";
        if (t.stderrs) os << detail::fmt17((*t.stderrs)[static_cast<std::size_t>(x)]);
        if (t.p_connect) {
            os << "," << detail::fmt17((*t.p_connect)[static_cast<std::size_t>(x)]);
            os << ",";
            if (t.p_stderr) os << detail::fmt17((*t.p_stderr)[static_cast<std::size_t>(x)]);
        }
        os << "\n";
    }
}

inline TwoPointTable read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# rpmono-table v1", 0) != 0)
        throw std::invalid_argument("not an rpmono-table v1 file");
    if (!std::getline(is, line)) throw std::invalid_argument("missing table header row");
    auto head = detail::split_csv(line);
    if (head.size() != 3) throw std::invalid_argument("malformed table header row");
    const int d = std::stoi(head[0]);
    std::vector<int> sides;
    {
        std::stringstream ss(head[1]);
        std::string part;
        while (std::getline(ss, part, 'x')) sides.push_back(std::stoi(part));
    }
    if (sides.size() == 1 && d > 1) sides.assign(static_cast<std::size_t>(d), sides[0]);
    if (static_cast<int>(sides.size()) != d)
        throw std::invalid_argument("table header dimension mismatch");
    TwoPointTable t(sides, provenance_from_string(head[2]));
    const auto g = t.geometry();
    bool any_stderr = false, any_p = false, any_pse = false;
    std::vector<double> se(t.values.size(), 0.0), pc(t.values.size(), 0.0),
        pse(t.values.size(), 0.0);
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = detail::split_csv(line);
        if (static_cast<int>(f.size()) < d + 2)
            throw std::invalid_argument("short table row: " + line);
        std::vector<int> c(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] = std::stoi(f[static_cast<std::size_t>(i)]);
        const auto x = static_cast<std::size_t>(g.vertex(c));
        t.values[x] = std::stod(f[static_cast<std::size_t>(d)]);
        if (!f[static_cast<std::size_t>(d) + 1].empty()) {
            se[x] = std::stod(f[static_cast<std::size_t>(d) + 1]);
            any_stderr = true;
        }
        if (f.size() >= static_cast<std::size_t>(d) + 3) {
            pc[x] = std::stod(f[static_cast<std::size_t>(d) + 2]);
            any_p = true;
            if (f.size() >= static_cast<std::size_t>(d) + 4 &&
                !f[static_cast<std::size_t>(d) + 3].empty()) {
                pse[x] = std::stod(f[static_cast<std::size_t>(d) + 3]);
                any_pse = true;
            }
        }
        ++rows;
    }
    if (rows != t.vertex_count())
        throw std::invalid_argument("table has " + std::to_string(rows) + " rows, expected " +
                                    std::to_string(t.vertex_count()));
    if (any_stderr) t.stderrs = std::move(se);
    if (any_p) t.p_connect = std::move(pc);
    if (any_pse) t.p_stderr = std::move(pse);
    return t;
}

} // namespace rpmono
