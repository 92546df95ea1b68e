#include "affgrasp/cli.hpp"

int main(int argc, char** argv) { return affgrasp::cli::run_cli(argc, argv); }
