#pragma once

#include <vector>

#include "nodulegan/volume.hpp"

namespace ngan {

/// Foreground voxels with at least one 6-neighbour that is background or
/// outside the lattice.
BinaryMask surface_mask(const BinaryMask& m);
std::vector<Index3> surface_voxels(const BinaryMask& m);

/// Exact Euclidean distance in mm (anisotropic spacing) from every voxel
/// center to the nearest 1-voxel of `features`, by separable lower-envelope
/// transforms. Infinity everywhere when `features` is empty.
std::vector<double> distance_transform_mm(const BinaryMask& features);

}  // namespace ngan
