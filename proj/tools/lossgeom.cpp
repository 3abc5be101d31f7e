#include "lossgeom/cli.hpp"

int main(int argc, char** argv) { return lossgeom::cli::run_command(argc, argv); }
