#include <iostream>

#include "cardioseq/cli.hpp"

int main(int argc, char** argv) { return cardioseq::cli::run_cli(argc, argv, std::cout, std::cerr); }
