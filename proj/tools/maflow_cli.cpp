#include "maflow/cli.hpp"

int main(int argc, char** argv) { return maflow::cli::run_cli(argc, argv); }
