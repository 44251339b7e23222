#include "ojkd/cli.hpp"

int main(int argc, char** argv) { return ojkd::run_cli(argc, argv); }
