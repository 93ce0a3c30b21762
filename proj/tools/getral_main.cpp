#include <iostream>
#include <string>
#include <vector>

#include "getral/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return getral::run_cli(args, std::cout, std::cerr);
}
