#include "rarforge/cli.hpp"

int main(int argc, char** argv) { return rarforge::run_cli(argc, argv); }
