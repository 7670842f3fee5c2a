#include "tseb/cli.hpp"

int main(int argc, char** argv) { return tseb::run_cli(argc, argv); }
