#include "swt/cli.hpp"

int main(int argc, char** argv) { return swt::cli::run(argc, argv); }
