#include "rtr/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return rtr::cli::run(argc, argv, std::cout, std::cerr); }
