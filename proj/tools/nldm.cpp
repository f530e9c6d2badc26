#include "nldm/cli.hpp"

int main(int argc, char** argv) { return nldm::cli::run_cli(argc, argv); }
