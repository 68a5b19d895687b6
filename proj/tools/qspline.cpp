#include "qspline/cli.hpp"

int main(int argc, char** argv) { return qspline::cli::main(argc, argv); }
