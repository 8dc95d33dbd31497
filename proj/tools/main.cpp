#include <iostream>

#include "bimpm/cli.hpp"

int main(int argc, char** argv) { return bimpm::run_cli(argc, argv, std::cout, std::cerr); }
