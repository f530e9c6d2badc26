#pragma once

#include "nldm/core.hpp"
#include "nldm/features.hpp"
#include "nldm/lstsq.hpp"
#include "nldm/identify.hpp"
#include "nldm/predict.hpp"
#include "nldm/metrics.hpp"
#include "nldm/odes.hpp"
#include "nldm/basin.hpp"
#include "nldm/io.hpp"
