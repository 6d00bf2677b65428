#include "app.hpp"

int main(int argc, char** argv) { return esfm::cli::run(argc, argv); }
