#include <iostream>
#include <string>
#include <vector>

#include "fidmix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fidmix::run_cli(args, std::cout, std::cerr);
}
