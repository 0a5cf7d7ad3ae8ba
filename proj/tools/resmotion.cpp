#include "resmotion/cli/commands.hpp"

int main(int argc, char** argv) { return resmotion::cli::run(argc, argv); }
