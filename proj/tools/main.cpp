#include "fishdet/cli.hpp"

int main(int argc, char** argv) { return fishdet::cli::run(argc, argv); }
