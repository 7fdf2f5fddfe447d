#include "kalibr/app.hpp"

int main(int argc, char** argv) { return kalibr::app::cli_main(argc, argv); }
