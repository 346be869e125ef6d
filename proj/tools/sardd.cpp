#include "sardd/cli.hpp"

int main(int argc, char** argv) { return sardd::run_command(argc, argv); }
