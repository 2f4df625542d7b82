#include <iostream>

#include "laygen/cli.hpp"

int main(int argc, char** argv) {
  return laygen::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
