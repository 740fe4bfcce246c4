#include <iostream>

#include "gbf/cli.hpp"

int main(int argc, char** argv) { return gbf::run_cli(argc, argv, std::cout, std::cerr); }
