#include "misspec/cli.hpp"

int main(int argc, char** argv) { return misspec::cli_main(argc, argv); }
