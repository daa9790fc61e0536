#include <iostream>

#include "tracelm/cli.hpp"

int main(int argc, char** argv) {
    return tracelm::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
