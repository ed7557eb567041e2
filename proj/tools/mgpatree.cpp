#include <iostream>
#include <string>
#include <vector>

#include "mgpatree/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mgpa::cli::run(args, std::cout, std::cerr);
}
