#include <iostream>
#include <string>
#include <vector>

#include "sersyn/commands.hpp"

int main(int argc, char** argv) {
    return sersyn::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout,
                                std::cerr);
}
