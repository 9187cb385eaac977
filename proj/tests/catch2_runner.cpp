// Catch2 amalgamated implementation, compiled once for all test binaries.
#include <catch2/catch_amalgamated.cpp>
