#include "crackscope/cli.hpp"

int main(int argc, char** argv) { return crackscope::run_cli(argc, argv); }
