#include <vector>

#include "ctrkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ctrkit::run_cli(args);
}
