#include <iostream>

#include "diffcap/cli.hpp"

int main(int argc, char** argv) { return diffcap::cli::dispatch(argc, argv, std::cout, std::cerr); }
