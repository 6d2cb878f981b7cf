#include <string>
#include <vector>

#include "thinlab/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return thinlab::io::run_cli(args);
}
