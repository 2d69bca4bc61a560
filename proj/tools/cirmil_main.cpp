#include <cirmil/cli.hpp>

int main(int argc, char** argv)
{
    return cirmil::cli::main(argc, argv);
}
