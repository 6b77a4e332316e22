#pragma once

#include "artic/correlation_map_file.hpp"
#include "artic/grid.hpp"
#include "artic/metrics.hpp"
#include "artic/netem.hpp"
#include "artic/rate_controller.hpp"
#include "artic/scenario.hpp"
#include "artic/semantic_allocator.hpp"
#include "artic/session.hpp"
#include "artic/transport.hpp"
#include "artic/units.hpp"
