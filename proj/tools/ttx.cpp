#include "ttx/cli.hpp"

int main(int argc, char** argv) { return ttx::cli::run_cli(argc, argv); }
