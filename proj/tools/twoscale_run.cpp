#include "twoscale/cli.hpp"

int main(int argc, char** argv) { return twoscale::cli::main(argc, argv); }
