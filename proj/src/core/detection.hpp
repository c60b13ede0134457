#pragma once

#include "core/dataset.hpp"

namespace foodpipe {

// Scored class-agnostic localization output.
struct Detection {
  BoundingBox bbox;
  double score = 0.0;
};

}  // namespace foodpipe
