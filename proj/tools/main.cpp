#include "hetmf_cli.hpp"

int main(int argc, char** argv) { return hetmf::cli::run(argc, argv); }
