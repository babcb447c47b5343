#include "stagematte/pipeline.hpp"

int main(int argc, char** argv) { return stagematte::pipeline::run_cli(argc, argv); }
