#include "tickopt/cli.hpp"

int main(int argc, char** argv) { return tickopt::cli::run(argc, argv); }
