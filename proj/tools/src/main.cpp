#include <iostream>

#include "hetstream_cli/cli.hpp"

int main(int argc, char** argv) { return hetstream::cli::run_cli(argc, argv, std::cout, std::cerr); }
