#include "vseg/cli.hpp"

int main(int argc, char** argv) { return vseg::dispatch(argc, argv); }
