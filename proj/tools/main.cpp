#include <iostream>

#include "urbangen/cli.hpp"

int main(int argc, char** argv) { return urbangen::cli::run(argc, argv, std::cout, std::cerr); }
