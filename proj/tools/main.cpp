#include <iostream>
#include <string>
#include <vector>

#include "acconet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return acconet::cli::run(args, std::cout, std::cerr);
}
