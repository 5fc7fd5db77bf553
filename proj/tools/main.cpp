#include <iostream>

#include "ntklab/cli.hpp"

int main(int argc, char** argv) {
    return ntklab::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
