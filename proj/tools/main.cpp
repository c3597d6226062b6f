#include "gauss_eot/cli.hpp"

int main(int argc, char** argv) { return gauss_eot::cli::run(argc, argv); }
