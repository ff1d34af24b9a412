#include "ife/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ife::run_cli(argc, argv, std::cout, std::cerr); }
