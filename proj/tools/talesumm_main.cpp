#include <string>
#include <vector>

#include "talesumm/cli.hpp"

int main(int argc, char** argv) {
  return talesumm::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
