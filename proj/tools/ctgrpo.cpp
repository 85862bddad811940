#include "ctgrpo/cli.hpp"

int main(int argc, char** argv) { return ctgrpo::run_cli(argc, argv); }
