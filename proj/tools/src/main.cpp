#include <iostream>

#include "geoslomo_cli/cli.hpp"

int main(int argc, char** argv) { return geoslomo::cli::run(argc, argv, std::cout, std::cerr); }
