#include <doctest.h>

#include <sstream>

#include "rpmono/rng.hpp"
#include "rpmono/two_point_table.hpp"

using namespace rpmono;

TEST_CASE("cesaro sum of a constant table") {
    TwoPointTable t(std::vector<int>{4, 4}, Provenance::synthetic);
    std::fill(t.values.begin(), t.values.end(), 0.375);
    auto [mean, err] = cesaro_sum(t);
    CHECK(mean == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(err == 0.0);
}

TEST_CASE("cesaro sum rejects incomplete tables") {
    TwoPointTable t(std::vector<int>{2, 2}, Provenance::synthetic);
    t.values[0] = 1.0;  // others NaN
    CHECK_FALSE(t.complete());
    CHECK_THROWS_AS(cesaro_sum(t), std::invalid_argument);
}

TEST_CASE("cesaro propagates stderr in quadrature") {
    TwoPointTable t(std::vector<int>{2, 2}, Provenance::stochastic);
    t.values = {1.0, 2.0, 3.0, 4.0};
    t.stderrs = std::vector<double>{0.1, 0.2, 0.2, 0.4};
    auto [mean, err] = cesaro_sum(t);
    CHECK(mean == doctest::Approx(2.5));
    CHECK(err == doctest::Approx(std::sqrt(0.01 + 0.04 + 0.04 + 0.16) / 4.0));
}

TEST_CASE("csv round trip is bit exact") {
    TwoPointTable t(std::vector<int>{4, 4}, Provenance::stochastic);
    Rng rng(17);  // deterministic awkward values
    for (auto& v : t.values) v = rng.gaussian() / 3.0;
    t.stderrs = std::vector<double>(t.values.size());
    for (auto& v : *t.stderrs) v = std::abs(rng.gaussian()) * 1e-3;

    std::ostringstream os;
    write_csv(os, t);
    std::istringstream is(os.str());
    auto back = read_csv(is);

    CHECK(back.sides == t.sides);
    CHECK(back.provenance == t.provenance);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        CHECK(back.values[i] == t.values[i]);
        CHECK((*back.stderrs)[i] == (*t.stderrs)[i]);
    }
    // second serialization is byte-identical
    std::ostringstream os2;
    write_csv(os2, back);
    CHECK(os.str() == os2.str());
}

TEST_CASE("csv carries the connection-probability columns") {
    TwoPointTable t(std::vector<int>{2, 2}, Provenance::enumeration);
    t.values = {0.0, 0.25, 0.5, 0.25};
    t.p_connect = std::vector<double>{0.1, 0.125, 0.25, 0.125};
    std::ostringstream os;
    write_csv(os, t);
    std::istringstream is(os.str());
    auto back = read_csv(is);
    REQUIRE(back.p_connect.has_value());
    for (std::size_t i = 0; i < 4; ++i)
        CHECK((*back.p_connect)[i] == (*t.p_connect)[i]);
    const bool stray_stderr = back.stderrs.has_value() && (*back.stderrs)[1] != 0.0;
    CHECK_FALSE(stray_stderr);
}

TEST_CASE("csv rejects malformed input") {
    {
        std::istringstream is("not a table\n");
        CHECK_THROWS_AS(read_csv(is), std::invalid_argument);
    }
    {
        std::istringstream is("# rpmono-table v1\n2,4,dense\n0,0,1.0,\n");
        CHECK_THROWS_AS(read_csv(is), std::invalid_argument);  // missing rows
    }
}
