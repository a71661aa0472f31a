#include "phlab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return phlab::cli::run(argc, argv, std::cout, std::cerr); }
