#include "qfc/cli.hpp"

int main(int argc, char** argv) { return qfc::run_cli(argc, argv); }
