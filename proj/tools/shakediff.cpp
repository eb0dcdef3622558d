#include <iostream>

#include "shakediff/harness/commands.hpp"

int main(int argc, char** argv) { return shakediff::harness::run_cli(argc, argv, std::cout, std::cerr); }
