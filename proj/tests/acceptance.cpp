// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code 0 only when all pass.

#include <iostream>

#include "rpmono/cli.hpp"
#include "rpmono/selftest.hpp"

int main() {
    const auto runner = [](const std::vector<std::string>& a, std::ostream& o) {
        return rpmono::cli::run(a, o);
    };
    const bool ok =
        rpmono::selftest::run_all("acceptance_out", 0, false, std::cout, runner);
    return ok ? 0 : 1;
}
