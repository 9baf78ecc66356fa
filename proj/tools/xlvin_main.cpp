#include <iostream>

#include "xlvin/cli/app.hpp"

int main(int argc, char** argv) {
    return xlvin::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
