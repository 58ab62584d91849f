#include "lbkt/cli.hpp"

int main(int argc, char** argv) { return lbkt::cli::run(argc, argv); }
