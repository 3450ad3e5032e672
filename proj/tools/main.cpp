#include "cli.hpp"

int main(int argc, char** argv) { return rankprop::cli::run(argc, argv); }
