#include "cropway/cli.hpp"

int main(int argc, char** argv) { return cropway::cli_run(argc, argv); }
