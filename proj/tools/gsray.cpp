#include <iostream>
#include <string>
#include <vector>

#include "gsray/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gsray::run_cli(args, std::cout, std::cerr);
}
