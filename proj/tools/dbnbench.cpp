#include <iostream>
#include <string>
#include <vector>

#include "dbnbench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dbnbench::cli_main(args, std::cout, std::cerr);
}
