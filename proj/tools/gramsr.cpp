#include "gramsr/service.hpp"

int main(int argc, char** argv) { return gramsr::cli_dispatch(argc, argv); }
