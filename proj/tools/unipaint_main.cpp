#include <iostream>

#include "unipaint/cli/cli.hpp"

int main(int argc, char** argv) { return unipaint::cli::run_cli(argc, argv, std::cout, std::cerr); }
