#include "rgcop/pipeline.hpp"

int main(int argc, char** argv) { return rgcop::cli::run_cli(argc, argv); }
