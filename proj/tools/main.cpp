#include "cli.hpp"

int main(int argc, char** argv) {
  return kfprop::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
