#pragma once

/// \file
/// The three training enhancers and their samplers.

#include "seqflow/cve.hpp"
#include "seqflow/doe.hpp"
#include "seqflow/filters.hpp"
#include "seqflow/motion.hpp"
#include "seqflow/slic.hpp"
#include "seqflow/sve.hpp"
