#include <iostream>

#include "hbt/cli.hpp"

int main(int argc, char** argv) { return hbt::cli::run(argc, argv, std::cout, std::cerr); }
