#include "dodrio/cli.hpp"

int main(int argc, char** argv) { return dodrio::run_cli(argc, argv); }
