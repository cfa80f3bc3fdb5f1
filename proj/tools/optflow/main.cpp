#include "optflow/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return optflow::cli::run(argc, argv, std::cout, std::cerr); }
