#include <iostream>

#include "uapq/cli.hpp"

int main(int argc, char** argv) { return uapq::cli::run(argc, argv, std::cout, std::cerr); }
