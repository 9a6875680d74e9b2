#pragma once

// Umbrella include for the full library.

#include "fcs/arrival_time.hpp"
#include "fcs/common.hpp"
#include "fcs/linalg.hpp"
#include "fcs/point_process.hpp"
#include "fcs/quasifree.hpp"
#include "fcs/sampler.hpp"
#include "fcs/scenario.hpp"
#include "fcs/selfcheck.hpp"
#include "fcs/source_model.hpp"
#include "fcs/stationary_beam.hpp"
