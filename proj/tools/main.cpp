#include "advobj/pipeline.hpp"

int main(int argc, char** argv) { return advobj::cli_main(argc, argv); }
