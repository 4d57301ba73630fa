#include <iostream>

#include "pwc/cli.hpp"

extern char** environ;

int main(int argc, char** argv) { return pwc::run_cli(argc, argv, std::cout, std::cerr, environ); }
