#include <iostream>
#include <string>
#include <vector>

#include "sstap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sstap::cli::dispatch(args, std::cout, std::cerr);
}
