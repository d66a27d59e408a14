#include <iostream>

#include "speckle/cli.hpp"

int main(int argc, char** argv) {
  return speckle::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
