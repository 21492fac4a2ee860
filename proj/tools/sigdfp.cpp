#include "sigdfp/cli.hpp"

int main(int argc, char** argv) { return sigdfp::cli_main(argc, argv); }
