#include <iostream>
#include <string>
#include <vector>

#include "aaunet/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return aaunet::cli::run(args, std::cout, std::cerr);
}
