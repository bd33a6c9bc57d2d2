#include <string>
#include <vector>

#include "gridtopo/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gridtopo::run_cli(args);
}
