#include <string>
#include <vector>

#include "dfq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dfq::bench::cli_main(args);
}
