#include <iostream>

#include "dispfl/cli.hpp"

int main(int argc, char** argv) { return dispfl::run_cli(argc, argv, std::cout, std::cerr); }
