#pragma once

// Umbrella header: soil hydraulics, crop response, the cylindrical field
// model, clustering-based model reduction, the variable-time irrigation
// scheduler, and the file formats tying them together.

#include "pivotsched/common.hpp"
#include "pivotsched/config.hpp"
#include "pivotsched/crop.hpp"
#include "pivotsched/csv.hpp"
#include "pivotsched/field.hpp"
#include "pivotsched/grid.hpp"
#include "pivotsched/reduction.hpp"
#include "pivotsched/scheduler.hpp"
#include "pivotsched/soil.hpp"
#include "pivotsched/weather.hpp"
