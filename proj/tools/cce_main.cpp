#include "cce/cli.hpp"

int main(int argc, char** argv) { return cce::cli::run_cli(argc, argv); }
