#include "cli_app.hpp"

int main(int argc, char** argv) { return av::cli::run(argc, argv); }
