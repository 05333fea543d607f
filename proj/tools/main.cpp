#include "cli.hpp"

int main(int argc, char** argv) { return sm4::cli::main(argc, argv); }
