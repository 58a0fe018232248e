#include <iostream>

#include "livemath/cli.hpp"

int main(int argc, char** argv) {
  return livemath::cli::run_decontam(argc, argv, std::cout, std::cerr);
}
