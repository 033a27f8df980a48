#include "amp/cli.hpp"

int main(int argc, char** argv) {
    return amp::cli::run(argc, argv);
}
