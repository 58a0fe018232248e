#include <iostream>

#include "livemath/cli.hpp"

int main(int argc, char** argv) { return livemath::cli::run(argc, argv, std::cout, std::cerr); }
