#include <iostream>
#include <string>
#include <vector>

#include "ema/cli.hpp"

int main(int argc, char** argv) {
  return ema::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
