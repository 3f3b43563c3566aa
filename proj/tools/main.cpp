#include "zoomiq/cli.hpp"

int main(int argc, char** argv) { return zoomiq::cli::run(argc, argv); }
