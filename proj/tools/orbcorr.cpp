#include "orbcorr/cli/app.hpp"

#include <iostream>

int main(int argc, char** argv) { return orbcorr::cli::run(argc, argv, std::cout, std::cerr); }
