#include "ccfpca/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return ccfpca::cli::run(argc, argv, std::cout, std::cerr);
}
