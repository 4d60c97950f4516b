#include "scnfusion/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace scnfusion {

double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) throw DataError("quantile of empty set");
    std::sort(xs.begin(), xs.end());
    double h = (static_cast<double>(xs.size()) - 1.0) * p;
    size_t lo = static_cast<size_t>(std::floor(h));
    size_t hi = std::min(lo + 1, xs.size() - 1);
    double frac = h - static_cast<double>(lo);
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double median_of(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

std::vector<std::uint8_t> brain_mask(const VolumeGrid& volume, double threshold) {
    std::vector<std::uint8_t> mask(volume.data.size(), 0);
    size_t count = 0;
    for (size_t i = 0; i < volume.data.size(); ++i) {
        if (volume.data[i] > threshold) {
            mask[i] = 1;
            ++count;
        }
    }
    if (count == 0) throw DataError("empty brain mask: no voxel above threshold");
    return mask;
}

NormalizeResult normalize_robust(const VolumeGrid& volume,
                                 const std::vector<std::uint8_t>& mask,
                                 const NormalizationParams& params) {
    if (params.clip_lo >= params.clip_hi)
        throw ConfigError("normalization clip_lo must be below clip_hi");
    if (mask.size() != volume.data.size())
        throw DataError("mask/volume size mismatch");

    std::vector<double> inside;
    inside.reserve(mask.size());
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) inside.push_back(volume.data[i]);
    if (inside.empty()) throw DataError("empty brain mask");

    double med = median_of(inside);
    std::vector<double> dev(inside.size());
    for (size_t i = 0; i < inside.size(); ++i) dev[i] = std::abs(inside[i] - med);
    double mad = median_of(std::move(dev)) * params.mad_scale;

    NormalizeResult res;
    res.volume.shape = volume.shape;
    res.volume.affine = volume.affine;
    res.volume.data.assign(volume.data.size(), 0.0);

    double span = params.clip_hi - params.clip_lo;
    if (mad == 0.0) {
        // Constant image inside the mask: everything sits at the median.
        res.degenerate_mad = true;
        for (size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) res.volume.data[i] = 0.5;
        return res;
    }
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        double z = (volume.data[i] - med) / mad;
        z = std::clamp(z, params.clip_lo, params.clip_hi);
        res.volume.data[i] = (z - params.clip_lo) / span;
    }
    return res;
}

}  // namespace scnfusion
