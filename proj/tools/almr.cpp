#include "almr/cli.hpp"

int main(int argc, char** argv) { return almr::cli::run(argc, argv); }
