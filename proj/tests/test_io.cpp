#include <catch2/catch_amalgamated.hpp>
#include "relmesh/relmesh.hpp"
