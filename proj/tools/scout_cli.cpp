#include "scout/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return scout::cli::run_cli(argc, argv, std::cout, std::cerr); }
