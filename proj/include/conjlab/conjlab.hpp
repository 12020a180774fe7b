#pragma once

#include "conjlab/dynsys.hpp"
#include "conjlab/forecast.hpp"
#include "conjlab/geomap.hpp"
#include "conjlab/hartman.hpp"
#include "conjlab/maps.hpp"
#include "conjlab/optimality.hpp"
#include "conjlab/simdeg.hpp"
#include "conjlab/types.hpp"
