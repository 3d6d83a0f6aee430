#pragma once

#include "dmet/clustering.hpp"
#include "dmet/core.hpp"
#include "dmet/error.hpp"
#include "dmet/io.hpp"
#include "dmet/linalg.hpp"
#include "dmet/metrics.hpp"
#include "dmet/pca.hpp"
#include "dmet/pipeline.hpp"
#include "dmet/random.hpp"
#include "dmet/simulator.hpp"
#include "dmet/stats.hpp"
#include "dmet/synthesize.hpp"
#include "dmet/topology.hpp"
