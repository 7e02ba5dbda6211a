#include <string>
#include <vector>

#include "cellscan/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cellscan::run_cli(std::move(args));
}
