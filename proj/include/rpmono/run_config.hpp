#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rpmono::cli {

/// Flat key=value run configuration (section.key syntax). Unknown keys are
/// rejected; command-line flags override file values.
class RunConfig {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "out_dir", "seed", "threads",
            "quantum.d", "quantum.L", "quantum.S", "quantum.u", "quantum.beta",
            "quantum.engine", "quantum.R", "quantum.seed", "quantum.degree",
            "rpm.d", "rpm.L", "rpm.N", "rpm.beta", "rpm.preset", "rpm.m_max",
            "rpm.engine", "rpm.sweeps", "rpm.burn_in", "rpm.seed",
            "infrared.d", "infrared.L", "infrared.tol", "infrared.u",
            "infrared.convention", "infrared.eps",
            "check.sigma_k", "check.abs_tol", "check.vertex_rp", "check.M",
            "check.eps", "check.random_q", "check.q_seed"};
        return keys;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key))
            throw std::invalid_argument("unknown config key: " + key);
        values_[key] = value;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open config file: " + path);
        RunConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : std::stod(it->second);
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        // accept 1e6-style literals for counts
        return it == values_.end() ? fallback
                                   : static_cast<long long>(std::stod(it->second));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return it->second == "1" || it->second == "true" || it->second == "yes";
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace rpmono::cli
