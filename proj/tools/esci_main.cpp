#include "esci/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return esci::cli::run(argc, argv, std::cout, std::cerr); }
