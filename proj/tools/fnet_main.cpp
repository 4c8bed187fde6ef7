#include "fnet/cli.hpp"

int main(int argc, char** argv) { return fnet::cli::run(argc, argv); }
