#include <string>
#include <vector>

#include "texsyn/cli.hpp"

int main(int argc, char** argv) { return texsyn::run(std::vector<std::string>(argv, argv + argc)); }
