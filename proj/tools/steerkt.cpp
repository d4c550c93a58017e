#include "steerkt/cli.hpp"

int main(int argc, char** argv) { return steerkt::dispatch(argc, argv); }
