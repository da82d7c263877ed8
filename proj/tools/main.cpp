#include "opcode_sieve/cli.hpp"

int main(int argc, char** argv) { return opcode_sieve::run(argc, argv); }
