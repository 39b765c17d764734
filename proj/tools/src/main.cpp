#include "experiment.hpp"

int main(int argc, char** argv) { return spam::cli::run(argc, argv); }
