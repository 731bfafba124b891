#include <iostream>

#include "enet/cli.hpp"

int main(int argc, char** argv) { return enet::cli::run(argc, argv, std::cout, std::cerr); }
