#include "geega/cli.hpp"

int main(int argc, char** argv) { return geega::cli::run_main(argc, argv); }
