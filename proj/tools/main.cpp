#include <iostream>

#include "tailwatch/cli.hpp"

int main(int argc, char** argv) {
  return tailwatch::run_cli(argc, argv, std::cout, std::cerr);
}
