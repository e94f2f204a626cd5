#ifndef ANCHORMAP_ANCHORMAP_HPP_
#define ANCHORMAP_ANCHORMAP_HPP_

#include "anchormap/coarse_init.hpp"
#include "anchormap/ekf/filter.hpp"
#include "anchormap/error.hpp"
#include "anchormap/nl_refine.hpp"
#include "anchormap/range_model.hpp"
#include "anchormap/sim/fusion_demo.hpp"
#include "anchormap/sim/pipeline.hpp"
#include "anchormap/sim/report.hpp"
#include "anchormap/sim/scenario.hpp"
#include "anchormap/sim/seed.hpp"
#include "anchormap/sim/simulate.hpp"
#include "anchormap/types.hpp"
#include "anchormap/waypoint/evolutionary.hpp"
#include "anchormap/waypoint/gdop.hpp"
#include "anchormap/waypoint/min_snap.hpp"
#include "anchormap/waypoint/volume.hpp"

#endif  // ANCHORMAP_ANCHORMAP_HPP_
