#include "sattn/cli.hpp"

int main(int argc, char** argv) { return sattn::cli_run(argc, argv); }
