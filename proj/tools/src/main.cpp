#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return csl::cli::run(argc, argv, std::cout, std::cerr);
}
