#include <iostream>

#include "mangacolor/cli.hpp"

int main(int argc, char** argv) { return mangacolor::run_cli(argc, argv, std::cout, std::cerr); }
