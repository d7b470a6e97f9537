#include "nsc/frontend.hpp"

int main(int argc, char** argv) { return nsc::run_cli(argc, argv); }
