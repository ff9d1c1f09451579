#include "cli_harness.hpp"

int main(int argc, char** argv) { return fracwave::cli::run(argc, argv); }
