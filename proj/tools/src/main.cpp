#include <iostream>
#include <string>
#include <vector>

#include "baet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return baet::cli::dispatch(args, std::cout, std::cerr);
}
