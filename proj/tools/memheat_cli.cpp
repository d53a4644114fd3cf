#include "memheat/harness.hpp"

int main(int argc, char** argv) {
    return memheat::harness::run_command(argc, argv);
}
