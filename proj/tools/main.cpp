#include <iostream>
#include <string>
#include <vector>

#include "autoform/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return autoform::dispatch(args, std::cout, std::cerr);
}
