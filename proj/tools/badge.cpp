#include "badge/cli.hpp"

int main(int argc, char** argv) { return badge::run_cli(argc, argv); }
