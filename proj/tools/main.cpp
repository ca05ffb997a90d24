#include "commands.hpp"

int main(int argc, char** argv) { return fetometry::cli::run(argc, argv); }
