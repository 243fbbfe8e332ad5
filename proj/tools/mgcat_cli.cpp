#include "mgcat/cli.hpp"

int main(int argc, char** argv) { return mgcat::cli::run(argc, argv); }
