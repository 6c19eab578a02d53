#include "fflocal/cli.hpp"

int main(int argc, char** argv) { return fflocal::run_command(argc, argv); }
