#pragma once

#include <cstdint>
#include <vector>

#include "scnfusion/nifti.hpp"

namespace scnfusion {

struct NormalizationParams {
    double clip_lo = -3.0;
    double clip_hi = 3.0;
    double mad_scale = 1.4826;  // consistency constant; 1.0 also valid
    double mask_threshold = 0.0;  // brain voxel: value > threshold
};

// Brain voxels are strictly above the threshold (skull-stripped inputs have
// exact-zero background). Throws DataError when the mask comes out empty.
std::vector<std::uint8_t> brain_mask(const VolumeGrid& volume, double threshold = 0.0);

struct NormalizeResult {
    VolumeGrid volume;      // masked voxels in [0,1], background forced to 0
    bool degenerate_mad = false;  // MAD was 0; all masked voxels mapped to 0.5
};

// Median/MAD standardization inside the mask, clip to [clip_lo, clip_hi] in
// z-units, then rescale linearly to [0,1].
NormalizeResult normalize_robust(const VolumeGrid& volume,
                                 const std::vector<std::uint8_t>& mask,
                                 const NormalizationParams& params);

// Linear-interpolation quantile at h = (n-1)p over a copy of xs.
double quantile(std::vector<double> xs, double p);
double median_of(std::vector<double> xs);

}  // namespace scnfusion
