#include "resetopt/cli.hpp"

int main(int argc, char** argv) { return resetopt::cli::run(argc, argv); }
