#include "risk/cli.hpp"

int main(int argc, char** argv) { return risk::run_cli(argc, argv); }
