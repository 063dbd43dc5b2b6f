#include <iostream>
#include <string>
#include <vector>

#include "voxdec/cli.hpp"

int main(int argc, char** argv) {
  return voxdec::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
