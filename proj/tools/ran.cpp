#include <iostream>

#include "ran/cli.hpp"

int main(int argc, char** argv) {
  return ran::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
