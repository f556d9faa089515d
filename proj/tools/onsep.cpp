#include <iostream>

#include "onsep/cli.hpp"

int main(int argc, char** argv) {
    return onsep::cli::main(argc, argv, std::cout, std::cerr);
}
