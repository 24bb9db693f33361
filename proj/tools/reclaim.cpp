#include <iostream>

#include "reclaim/cli/cli.hpp"

int main(int argc, char** argv) { return reclaim::cli::run(argc, argv, std::cout, std::cerr); }
