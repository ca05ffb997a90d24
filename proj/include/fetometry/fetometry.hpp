#pragma once

#include "fetometry/agreement.hpp"
#include "fetometry/backend.hpp"
#include "fetometry/biometry.hpp"
#include "fetometry/config.hpp"
#include "fetometry/error.hpp"
#include "fetometry/estimation.hpp"
#include "fetometry/geometry.hpp"
#include "fetometry/grid.hpp"
#include "fetometry/ingest.hpp"
#include "fetometry/metrics.hpp"
#include "fetometry/morphology.hpp"
#include "fetometry/phantom.hpp"
#include "fetometry/pipeline.hpp"
#include "fetometry/planes.hpp"

namespace fetometry {
inline constexpr const char* kVersion = "0.1.0";
}
