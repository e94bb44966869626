#include "ugclab/cli.hpp"

int main(int argc, char** argv) { return ugclab::run_cli(argc, argv); }
