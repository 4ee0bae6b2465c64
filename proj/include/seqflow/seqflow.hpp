#pragma once

#include "seqflow/array_api.hpp"
#include "seqflow/config.hpp"
#include "seqflow/enhancers.hpp"
#include "seqflow/error.hpp"
#include "seqflow/flo_io.hpp"
#include "seqflow/flow_color.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/image_io.hpp"
#include "seqflow/losses.hpp"
#include "seqflow/metrics.hpp"
#include "seqflow/netref.hpp"
#include "seqflow/scene_io.hpp"
#include "seqflow/synth.hpp"
#include "seqflow/warp.hpp"
