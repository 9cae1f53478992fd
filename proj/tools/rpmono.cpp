#include <string>
#include <vector>

#include "rpmono/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return rpmono::cli::run(args);
}
