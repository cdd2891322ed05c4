#include "synex/cli.hpp"

int main(int argc, char** argv) { return synex::cli::run(argc, argv); }
