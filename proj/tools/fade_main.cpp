#include "fade/cli_commands.hpp"

int main(int argc, char** argv) { return fade::run_cli(argc, argv); }
