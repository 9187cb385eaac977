// relmesh — relational anatomical mesh supervision toolkit.
#pragma once

#include "relmesh/core.hpp"
#include "relmesh/occupancy.hpp"
#include "relmesh/relations.hpp"
#include "relmesh/sampling.hpp"
#include "relmesh/losses.hpp"
#include "relmesh/metrics.hpp"
#include "relmesh/synth.hpp"
#include "relmesh/io.hpp"
#include "relmesh/deform.hpp"
