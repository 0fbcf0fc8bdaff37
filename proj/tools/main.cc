// tools/main.cc

#include <iostream>
#include <string>
#include <vector>

#include "joinss/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return joinss::run_command(args, std::cout, std::cerr);
}
