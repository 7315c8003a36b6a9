#include <iostream>

#include "disent/cli.hpp"

int main(int argc, char** argv) { return disent::run_cli(argc, argv, std::cout, std::cerr); }
