#include "moelens/cli.hpp"

int main(int argc, char** argv) { return moelens::cli::dispatch(argc, argv); }
