#include "dgt/cli.hpp"

int main(int argc, char** argv) { return dgt::run_cli(argc, argv); }
