#include <string>
#include <vector>

#include "mvis/cli.hpp"

int main(int argc, char** argv) {
	std::vector<std::string> args(argv + 1, argv + argc);
	return mvis::cli::run(args);
}
