#include "covaug/pipeline.hpp"

int main(int argc, char** argv)
{
    return covaug::cli_main(argc, argv);
}
