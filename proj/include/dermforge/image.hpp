#pragma once

#include <string>

#include "dermforge/tensor.hpp"

namespace dermforge {

// Decodes a raster file, area-average resizes to target x target, and returns
// channels-first RGB scaled to [0,1]. Throws DecodeError with the path on
// unreadable or undecodable files.
Tensor<float> decode_and_resize(const std::string& image_path, int target = 28);

}  // namespace dermforge
