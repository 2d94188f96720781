#include <iostream>
#include <string>
#include <vector>

#include "dvcr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dvcr::run_cli(args, std::cout, std::cerr);
}
