#include "fedsvd/cli.hpp"

int main(int argc, char** argv) { return fedsvd::cli::run(argc, argv); }
