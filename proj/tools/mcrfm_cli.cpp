#include <iostream>

#include "mcrfm/cli.hpp"

int main(int argc, char** argv) { return mcrfm::cli::run(argc, argv, std::cout, std::cerr); }
