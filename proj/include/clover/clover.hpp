#pragma once

#include "clover/rng.hpp"
#include "clover/parallel.hpp"
#include "clover/data.hpp"
#include "clover/tree.hpp"
#include "clover/forest.hpp"
#include "clover/conformal.hpp"
#include "clover/metrics.hpp"
#include "clover/simgen.hpp"
#include "clover/serialize.hpp"
#include "clover/harness.hpp"
