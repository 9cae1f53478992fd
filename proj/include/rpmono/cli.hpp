#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpmono/checker.hpp"
#include "rpmono/infrared_bounds.hpp"
#include "rpmono/quantum_gibbs.hpp"
#include "rpmono/random_path.hpp"
#include "rpmono/rng.hpp"
#include "rpmono/run_config.hpp"
#include "rpmono/selftest.hpp"
#include "rpmono/two_point_table.hpp"
#include "rpmono/version.hpp"
#include "rpmono/worm.hpp"

namespace rpmono::cli {

using json = nlohmann::json;

// exit-code contract: 0 pass, 1 inequality failure, 2 usage/config error,
// 3 capacity error
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCapacity = 3;

inline std::string detail_fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::string join_args(const std::vector<std::string>& args) {
    std::string s = "rpmono";
    for (const auto& a : args) {
        s += ' ';
        s += a;
    }
    return s;
}

inline json config_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.values()) j[k] = v;
    return j;
}

inline void write_table_and_metadata(const std::string& out_dir, const std::string& stem,
                                     const TwoPointTable& table, const json& metadata,
                                     std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto csv_path = fs::path(out_dir) / (stem + ".csv");
    const auto meta_path = fs::path(out_dir) / (stem + ".meta.json");
    {
        std::ofstream os(csv_path);
        write_csv(os, table);
    }
    {
        std::ofstream os(meta_path);
        os << metadata.dump(2) << "\n";
    }
    log << "wrote " << csv_path.string() << "\n";
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

} // namespace detail

inline int run_quantum(const RunConfig& cfg, const std::vector<std::string>& argv,
                       std::ostream& out) {
    detail::Timer timer;
    if (!cfg.has("quantum.d") || !cfg.has("quantum.L")) {
        out << "error: quantum.d and quantum.L are required\n";
        return kExitUsage;
    }
    gibbs::GibbsParams p;
    p.geometry = lattice::build_torus(static_cast<int>(cfg.get_int("quantum.d", 0)),
                                      static_cast<int>(cfg.get_int("quantum.L", 0)));
    p.S = cfg.get_double("quantum.S", 0.5);
    p.u = cfg.get_double("quantum.u", 0.0);
    p.beta = cfg.get_double("quantum.beta", 1.0);
    if (p.beta < 0.0 || !spin::is_half_integer_spin(p.S)) {
        out << "error: beta must be >= 0 and S a positive half-integer\n";
        return kExitUsage;
    }
    const std::string engine = cfg.get("quantum.engine", "dense");
    const auto seed = static_cast<std::uint64_t>(
        cfg.get_int("quantum.seed", cfg.get_int("seed", 1)));
    const int threads = static_cast<int>(cfg.get_int("threads", 0));

    TwoPointTable table;
    json extra;
    if (engine == "dense") {
        table = gibbs::dense_correlations(p);
        const gibbs::DenseGibbs dg(gibbs::SpinGraph::from_torus(p.geometry), p.S, p.u, p.beta);
        extra["log_z"] = dg.partition().log_z;
    } else if (engine == "stochastic") {
        const int r_samples = static_cast<int>(cfg.get_int("quantum.R", 100));
        const int degree = static_cast<int>(cfg.get_int("quantum.degree", 0));
        auto res = gibbs::stochastic_correlations(p, r_samples, degree, seed, threads);
        table = std::move(res.table);
        extra["degree_used"] = res.degree_used;
        extra["log_z"] = res.partition.log_z;
        extra["z_trace_mean"] = res.z_trace.mean;
        extra["z_trace_stderr"] = res.z_trace.stderr_;
        extra["spectral_lo"] = res.bounds.lo();
        extra["spectral_hi"] = res.bounds.hi();
    } else {
        out << "error: quantum.engine must be dense or stochastic\n";
        return kExitUsage;
    }

    json meta{{"command", detail::join_args(argv)},
              {"version", version},
              {"subcommand", "quantum"},
              {"config", detail::config_json(cfg)},
              {"engine", engine},
              {"seed", seed},
              {"threads", threads},
              {"doubled_edges", p.geometry.has_doubled_edges()},
              {"non_paper_geometry", p.geometry.non_paper_geometry()},
              {"runtime_seconds", timer.seconds()},
              {"engine_details", extra}};
    detail::write_table_and_metadata(cfg.get("out_dir", "."), "quantum_table", table, meta, out);
    return kExitOk;
}

inline int run_rpm(const RunConfig& cfg, const std::vector<std::string>& argv,
                   std::ostream& out) {
    detail::Timer timer;
    if (!cfg.has("rpm.d") || !cfg.has("rpm.L")) {
        out << "error: rpm.d and rpm.L are required\n";
        return kExitUsage;
    }
    rpm::RPMParams p;
    p.geometry = lattice::build_torus(static_cast<int>(cfg.get_int("rpm.d", 0)),
                                      static_cast<int>(cfg.get_int("rpm.L", 0)));
    p.n_colours = static_cast<int>(cfg.get_int("rpm.N", 1));
    p.beta = cfg.get_double("rpm.beta", 1.0);
    p.m_max = static_cast<int>(cfg.get_int("rpm.m_max", 1));
    if (p.beta < 0.0 || p.n_colours < 1) {
        out << "error: rpm.beta must be >= 0 and rpm.N >= 1\n";
        return kExitUsage;
    }
    const std::string preset = cfg.get("rpm.preset", "loop_on");
    rpm::TwoPointKind kind;
    if (preset == "loop_on") {
        p.weight = rpm::WeightFunctionSpec::loop_on(p.n_colours);
        kind = rpm::TwoPointKind::spin_source;
    } else if (preset == "crossing_on") {
        p.weight = rpm::WeightFunctionSpec::crossing_on(p.n_colours);
        kind = rpm::TwoPointKind::crossing;
    } else {
        out << "error: rpm.preset must be loop_on or crossing_on\n";
        return kExitUsage;
    }

    const std::string engine = cfg.get("rpm.engine", "enumerate");
    TwoPointTable table;
    json extra;
    if (engine == "enumerate") {
        auto res = rpm::enumerate_two_point(p, kind);
        table = std::move(res.table);
        extra["z_norm"] = res.z_norm;
        extra["identity_rel_error"] = res.identity_rel_error;
        extra["work_units"] = res.work_units;
        extra["truncation_bound_per_edge"] = res.truncation_bound_per_edge;
    } else if (engine == "worm") {
        const auto sweeps = cfg.get_int("rpm.sweeps", 100000);
        const auto burn = cfg.get_int("rpm.burn_in", sweeps / 10);
        const auto seed =
            static_cast<std::uint64_t>(cfg.get_int("rpm.seed", cfg.get_int("seed", 1)));
        auto res = rpm::worm_estimate(p, kind, sweeps, burn, seed);
        table = std::move(res.table);
        extra["z_fraction"] = res.z_fraction;
        extra["acceptance_rate"] = res.acceptance_rate;
        extra["measured_sweeps"] = res.measured_sweeps;
    } else {
        out << "error: rpm.engine must be enumerate or worm\n";
        return kExitUsage;
    }

    json meta{{"command", detail::join_args(argv)},
              {"version", version},
              {"subcommand", "rpm"},
              {"config", detail::config_json(cfg)},
              {"engine", engine},
              {"preset", preset},
              {"doubled_edges", p.geometry.has_doubled_edges()},
              {"non_paper_geometry", p.geometry.non_paper_geometry()},
              {"runtime_seconds", timer.seconds()},
              {"engine_details", extra}};
    detail::write_table_and_metadata(cfg.get("out_dir", "."), "rpm_table", table, meta, out);
    return kExitOk;
}

inline int run_infrared(const RunConfig& cfg, bool extrapolate, bool min_spin,
                        const std::vector<std::string>& argv, std::ostream& out) {
    detail::Timer timer;
    const int d = static_cast<int>(cfg.get_int("infrared.d", 3));
    infrared::IRReport rep;
    rep.d = d;
    if (extrapolate) {
        auto lim = infrared::j_limit(d, cfg.get_double("infrared.tol", 1e-3));
        if (!lim.converged)
            out << "warning: J extrapolation not converged within the L budget (last L = "
                << lim.last_L << ")\n";
        rep.J = lim.value;
        rep.extrapolated = true;
        rep.L = 0;
    } else {
        rep.L = static_cast<int>(cfg.get_int("infrared.L", 64));
        rep.J = infrared::j_sum(d, rep.L);
    }

    std::string min_spin_field, c1_field, m_field, s_field, u_field, conv_field;
    if (cfg.has("infrared.u") || min_spin) {
        rep.u = cfg.get_double("infrared.u", 0.0);
        u_field = std::to_string(rep.u);
    }
    const std::string conv_name = cfg.get("infrared.convention", "vertex_sq");
    const auto conv = conv_name == "edge_sq" ? infrared::ThresholdConvention::edge_sq
                                             : infrared::ThresholdConvention::vertex_sq;
    if (min_spin) {
        const auto th = infrared::min_spin_threshold(rep.u, d, rep.J, conv,
                                                     cfg.get_double("infrared.eps", 0.0));
        rep.min_spin = th.min_spin;
        min_spin_field = std::to_string(th.min_spin);
        conv_field = infrared::to_string(conv);
        if (!th.matches_paper_q)
            out << "note: edge_sq convention does not reproduce the quoted Q values\n";
    }
    if (cfg.has("quantum.S")) {
        rep.S = cfg.get_double("quantum.S", 0.5);
        rep.M = rep.S * (rep.S + 1.0) / 3.0;
        rep.c1 = infrared::c1_bound(rep.S, rep.u, rep.J);
        s_field = std::to_string(rep.S);
        c1_field = std::to_string(rep.c1);
        m_field = std::to_string(rep.M);
    }

    std::ostringstream csv;
    csv << "d,L,J,S,u,c1_bound,M,convention,min_spin\n";
    csv << d << "," << (rep.extrapolated ? std::string("inf") : std::to_string(rep.L)) << ","
        << detail_fmt(rep.J) << "," << s_field << "," << u_field << "," << c1_field << ","
        << m_field << "," << conv_field << "," << min_spin_field << "\n";
    out << csv.str();

    namespace fs = std::filesystem;
    const std::string out_dir = cfg.get("out_dir", ".");
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "infrared.csv");
        os << csv.str();
    }
    {
        json meta{{"command", detail::join_args(argv)},
                  {"version", version},
                  {"subcommand", "infrared"},
                  {"config", detail::config_json(cfg)},
                  {"seed", cfg.get_int("seed", 1)},
                  {"runtime_seconds", timer.seconds()}};
        std::ofstream os(fs::path(out_dir) / "infrared.meta.json");
        os << meta.dump(2) << "\n";
    }
    return kExitOk;
}

inline int run_check(const std::string& table_path, const RunConfig& cfg,
                     const std::vector<std::string>& argv, std::ostream& out) {
    detail::Timer timer;
    std::ifstream in(table_path);
    if (!in) {
        out << "error: cannot open table " << table_path << "\n";
        return kExitUsage;
    }
    const TwoPointTable table = read_csv(in);

    checker::CheckConfig ccfg;
    ccfg.sigma_k = cfg.get_double("check.sigma_k", 3.0);
    ccfg.abs_tol = cfg.get_double("check.abs_tol", 1e-10);
    ccfg.vertex_rp = cfg.get_bool("check.vertex_rp", false);

    double m_bound = cfg.get_double("check.M", 0.0);
    if (!cfg.has("check.M")) {
        for (double v : table.values) m_bound = std::max(m_bound, v);
    }

    checker::CheckReport report = checker::check_symmetry(table, ccfg);
    report.merge(checker::check_axis_dominance(table, ccfg));
    report.merge(checker::check_odd_monotonicity(table, ccfg));
    report.merge(checker::check_amplification(table, ccfg, m_bound));
    report.merge(checker::positivity_report(table, ccfg, m_bound,
                                            cfg.get_double("check.eps", 0.25)));

    const int random_q = static_cast<int>(cfg.get_int("check.random_q", 0));
    if (random_q > 0) {
        const auto g = table.geometry();
        Rng rng(static_cast<std::uint64_t>(cfg.get_int("check.q_seed", 1)));
        for (int k = 0; k < random_q; ++k) {
            lattice::VertexSet q(g);
            for (int v = 0; v < g.vertex_count(); ++v)
                if (rng.coin()) q.insert(v);
            const int axis = rng.index(g.dim());
            const lattice::Reflection r =
                lattice::Reflection::through_edge(axis, rng.index(g.side(axis)));
            report.merge(checker::check_partition_lemma(table, ccfg, q, r));
        }
    }

    const std::string out_dir = cfg.get("out_dir", ".");
    std::filesystem::create_directories(out_dir);
    auto j = report.to_json();
    j["summary"]["noise_consistent"] = report.noise_consistent(ccfg);
    j["summary"]["table"] = table_path;
    j["summary"]["M"] = m_bound;
    j["command"] = detail::join_args(argv);
    j["version"] = version;
    j["config"] = detail::config_json(cfg);
    j["seed"] = cfg.get_int("check.q_seed", cfg.get_int("seed", 1));
    j["runtime_seconds"] = timer.seconds();
    {
        std::ofstream os(std::filesystem::path(out_dir) / "check_report.json");
        os << j.dump(2) << "\n";
    }

    out << "checked " << report.records.size() << " records: " << report.failures()
        << " failures (" << report.deterministic_failures() << " deterministic, "
        << report.statistical_failures() << " statistical)\n";
    for (const auto& r : report.records)
        if (!r.pass)
            out << "  FAIL " << r.inequality << " at " << r.location.dump()
                << " margin=" << r.margin << " slack=" << r.slack << "\n";

    if (report.deterministic_failures() > 0) return kExitCheckFailure;
    if (!report.noise_consistent(ccfg)) return kExitCheckFailure;
    return kExitOk;
}

/// Command-line driver; returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout) {
    CLI::App app{"rpmono: two-point function engines and inequality checker for "
                 "reflection-positive lattice models"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long long seed = -1, threads = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key=value config file");
        sub->add_option("--out-dir", out_dir, "output directory");
        sub->add_option("--seed", seed, "global seed");
        sub->add_option("--threads", threads, "worker thread cap");
    };

    // quantum
    auto* q = app.add_subcommand("quantum", "quantum Gibbs two-point table");
    double q_d = 0, q_L = 0, q_S = 0, q_u = 0, q_beta = 0, q_R = 0, q_degree = 0;
    std::string q_engine;
    q->add_option("--d", q_d);
    q->add_option("--L", q_L);
    q->add_option("--S", q_S);
    q->add_option("--u", q_u);
    q->add_option("--beta", q_beta);
    q->add_option("--engine", q_engine);
    q->add_option("--R", q_R);
    q->add_option("--degree", q_degree);
    add_common(q);

    // rpm
    auto* rp = app.add_subcommand("rpm", "random path model two-point table");
    double r_d = 0, r_L = 0, r_N = 0, r_beta = 0, r_mmax = 0, r_sweeps = 0, r_burn = 0;
    std::string r_preset, r_engine;
    rp->add_option("--d", r_d);
    rp->add_option("--L", r_L);
    rp->add_option("--N", r_N);
    rp->add_option("--beta", r_beta);
    rp->add_option("--preset", r_preset);
    rp->add_option("--m-max", r_mmax);
    rp->add_option("--engine", r_engine);
    rp->add_option("--sweeps", r_sweeps);
    rp->add_option("--burn-in", r_burn);
    add_common(rp);

    // infrared
    auto* ir = app.add_subcommand("infrared", "dispersion sums and spin thresholds");
    double i_d = 0, i_L = 0, i_tol = 0, i_u = 0, i_eps = 0, i_S = 0;
    std::string i_conv;
    bool i_extrapolate = false, i_minspin = false;
    ir->add_option("--d", i_d);
    ir->add_option("--L", i_L);
    ir->add_option("--tol", i_tol);
    ir->add_option("--u", i_u);
    ir->add_option("--eps", i_eps);
    ir->add_option("--S", i_S);
    ir->add_option("--convention", i_conv);
    ir->add_flag("--extrapolate", i_extrapolate);
    ir->add_flag("--min-spin", i_minspin);
    add_common(ir);

    // check
    auto* ck = app.add_subcommand("check", "verify inequalities against a table");
    std::string ck_table;
    double ck_sigma = 0, ck_abs = 0, ck_M = 0, ck_eps = 0, ck_rq = 0, ck_qseed = 0;
    bool ck_vertex = false;
    ck->add_option("table", ck_table, "rpmono-table CSV")->required();
    ck->add_option("--sigma-k", ck_sigma);
    ck->add_option("--abs-tol", ck_abs);
    ck->add_option("--M", ck_M);
    ck->add_option("--eps", ck_eps);
    ck->add_option("--random-q", ck_rq);
    ck->add_option("--q-seed", ck_qseed);
    ck->add_flag("--vertex-rp", ck_vertex);
    add_common(ck);

    // selftest
    auto* st = app.add_subcommand("selftest", "run the acceptance suite");
    bool st_quick = false;
    st->add_flag("--quick", st_quick, "skip the long-running criteria");
    add_common(st);

    std::vector<std::string> argv_copy = args;
    try {
        std::vector<const char*> cargs;
        cargs.push_back("rpmono");
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            out << app.help();
            return kExitOk;
        }
        out << "usage error: " << e.what() << "\n";
        out << app.help();
        return kExitUsage;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
        if (!out_dir.empty()) cfg.set("out_dir", out_dir);
        if (seed >= 0) cfg.set("seed", std::to_string(seed));
        if (threads >= 0) cfg.set("threads", std::to_string(threads));

        if (app.got_subcommand(q)) {
            auto setif = [&](const char* flag, const char* key, double v) {
                if (q->count(flag)) cfg.set(key, detail_fmt(v));
            };
            setif("--d", "quantum.d", q_d);
            setif("--L", "quantum.L", q_L);
            setif("--S", "quantum.S", q_S);
            setif("--u", "quantum.u", q_u);
            setif("--beta", "quantum.beta", q_beta);
            setif("--R", "quantum.R", q_R);
            setif("--degree", "quantum.degree", q_degree);
            if (q->count("--engine")) cfg.set("quantum.engine", q_engine);
            return run_quantum(cfg, argv_copy, out);
        }
        if (app.got_subcommand(rp)) {
            auto setif = [&](const char* flag, const char* key, double v) {
                if (rp->count(flag)) cfg.set(key, detail_fmt(v));
            };
            setif("--d", "rpm.d", r_d);
            setif("--L", "rpm.L", r_L);
            setif("--N", "rpm.N", r_N);
            setif("--beta", "rpm.beta", r_beta);
            setif("--m-max", "rpm.m_max", r_mmax);
            setif("--sweeps", "rpm.sweeps", r_sweeps);
            setif("--burn-in", "rpm.burn_in", r_burn);
            if (rp->count("--preset")) cfg.set("rpm.preset", r_preset);
            if (rp->count("--engine")) cfg.set("rpm.engine", r_engine);
            return run_rpm(cfg, argv_copy, out);
        }
        if (app.got_subcommand(ir)) {
            auto setif = [&](const char* flag, const char* key, double v) {
                if (ir->count(flag)) cfg.set(key, detail_fmt(v));
            };
            setif("--d", "infrared.d", i_d);
            setif("--L", "infrared.L", i_L);
            setif("--tol", "infrared.tol", i_tol);
            setif("--u", "infrared.u", i_u);
            setif("--eps", "infrared.eps", i_eps);
            if (ir->count("--S")) cfg.set("quantum.S", detail_fmt(i_S));
            if (ir->count("--convention")) cfg.set("infrared.convention", i_conv);
            return run_infrared(cfg, i_extrapolate, i_minspin, argv_copy, out);
        }
        if (app.got_subcommand(ck)) {
            auto setif = [&](const char* flag, const char* key, double v) {
                if (ck->count(flag)) cfg.set(key, detail_fmt(v));
            };
            setif("--sigma-k", "check.sigma_k", ck_sigma);
            setif("--abs-tol", "check.abs_tol", ck_abs);
            setif("--M", "check.M", ck_M);
            setif("--eps", "check.eps", ck_eps);
            setif("--random-q", "check.random_q", ck_rq);
            setif("--q-seed", "check.q_seed", ck_qseed);
            if (ck_vertex) cfg.set("check.vertex_rp", "1");
            return run_check(ck_table, cfg, argv_copy, out);
        }
        if (app.got_subcommand(st)) {
            const int th = static_cast<int>(cfg.get_int("threads", 0));
            const auto runner = [](const std::vector<std::string>& a, std::ostream& o) {
                return run(a, o);
            };
            return selftest::run_all(cfg.get("out_dir", "selftest_out"), th, st_quick, out,
                                     runner)
                       ? kExitOk
                       : kExitCheckFailure;
        }
        out << "error: no subcommand\n";
        return kExitUsage;
    } catch (const gibbs::CapacityError& e) {
        out << "capacity error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const rpm::CapacityError& e) {
        out << "capacity error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const std::invalid_argument& e) {
        out << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        out << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

} // namespace rpmono::cli
