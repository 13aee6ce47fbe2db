#include <string>
#include <vector>

#include "evblur_app.hpp"

int main(int argc, char ** argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  return evblur::cli::run_cli(std::move(args));
}
