#include "themescope/cli.hpp"

int main(int argc, char** argv) { return themescope::cli::cli_dispatch(argc, argv); }
