#include "ideaeval/cli.hpp"

int main(int argc, char** argv) { return ideaeval::cli::run_cli(argc, argv); }
