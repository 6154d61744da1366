#include <string>
#include <vector>

#include "topogen/cli.hpp"

int main(int argc, char** argv) {
  return topogen::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
