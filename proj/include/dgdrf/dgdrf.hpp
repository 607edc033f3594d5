#pragma once

// Decentralized gradient descent with random features: umbrella header.

#include "dgdrf/analysis.hpp"
#include "dgdrf/data.hpp"
#include "dgdrf/engine.hpp"
#include "dgdrf/errors.hpp"
#include "dgdrf/experiment.hpp"
#include "dgdrf/features.hpp"
#include "dgdrf/io.hpp"
#include "dgdrf/random.hpp"
#include "dgdrf/theory.hpp"
#include "dgdrf/topology.hpp"
