#pragma once

#include "twinbeam/core_stats.hpp"
#include "twinbeam/criteria.hpp"
#include "twinbeam/detector.hpp"
#include "twinbeam/errors.hpp"
#include "twinbeam/experiment.hpp"
#include "twinbeam/fit.hpp"
#include "twinbeam/histogram.hpp"
#include "twinbeam/io.hpp"
#include "twinbeam/random.hpp"
#include "twinbeam/reconstruct.hpp"
