#include "masktrack/cli.hpp"

int main(int argc, char** argv) { return masktrack::cli::dispatch(argc, argv); }
