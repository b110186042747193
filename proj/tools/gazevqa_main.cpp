#include "gazevqa/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return gazevqa::run_command(args, std::cout, std::cerr);
}
