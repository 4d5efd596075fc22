#include "eigensampler/cli.hpp"

int main(int argc, char** argv) { return eigensampler::cli::main(argc, argv); }
