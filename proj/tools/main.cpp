#include <iostream>
#include <string>
#include <vector>

#include "bijou/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bijou::cli::dispatch(args, std::cout, std::cerr);
}
