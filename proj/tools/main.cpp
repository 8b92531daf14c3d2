#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return msmsharp::cli::run_cli(argc, argv, std::cout, std::cerr); }
