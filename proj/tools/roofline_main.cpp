#include <iostream>

#include "roofline/cli.hpp"

int main(int argc, char** argv) { return roofline::run_cli(argc, argv, std::cout, std::cerr); }
