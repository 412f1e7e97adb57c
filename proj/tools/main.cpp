#include <iostream>

#include "listap/cli.hpp"

int main(int argc, char** argv) { return listap::cli_dispatch(argc, argv, std::cout, std::cerr); }
