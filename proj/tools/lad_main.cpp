#include <string>
#include <vector>

#include "lad/cli.hpp"

int main(int argc, char** argv) {
  return lad::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
