#include <charprobe/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return charprobe::run_cli(argc, argv, std::cout, std::cerr); }
