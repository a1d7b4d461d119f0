#include <iostream>

#include "lsplit/cli.hpp"

int main(int argc, char** argv) { return lsplit::run_cli(argc, argv, std::cout, std::cerr); }
