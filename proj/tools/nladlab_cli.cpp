#include "nlad/lab.hpp"

int main(int argc, char** argv) { return nlad::run_cli(argc, argv); }
