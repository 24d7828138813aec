#include "commands.hpp"

int main(int argc, char** argv) { return repsim::cli::run(argc, argv); }
