#include "mixstream/cli.hpp"

int main(int argc, char** argv) { return mixstream::run_cli(argc, argv); }
