#include <cmath>

#include "doctest.h"
#include "scnfusion/preprocess.hpp"

using namespace scnfusion;

namespace {

VolumeGrid line_volume(std::vector<double> values) {
    VolumeGrid v;
    v.shape = {static_cast<int>(values.size()), 1, 1};
    v.data = std::move(values);
    return v;
}

}  // namespace

TEST_CASE("quantile uses linear interpolation at h=(n-1)p") {
    CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile({1, 2, 3, 4}, 0.75) == doctest::Approx(3.25));
    CHECK(quantile({5}, 0.5) == 5.0);
    CHECK(quantile({3, 1, 2}, 0.5) == 2.0);  // input order must not matter
    CHECK(median_of({4, 1, 3, 2}) == doctest::Approx(2.5));
}

TEST_CASE("brain mask keeps strictly positive voxels") {
    VolumeGrid v = line_volume({0.0, 1.0, -2.0, 0.5});
    auto mask = brain_mask(v, 0.0);
    CHECK(mask == std::vector<std::uint8_t>{0, 1, 0, 1});
    VolumeGrid empty = line_volume({0.0, -1.0});
    CHECK_THROWS_AS(brain_mask(empty, 0.0), DataError);
}

TEST_CASE("robust normalization of 1..5 matches the hand computation") {
    VolumeGrid v = line_volume({1, 2, 3, 4, 5});
    auto mask = brain_mask(v, 0.0);
    NormalizationParams params;
    NormalizeResult res = normalize_robust(v, mask, params);
    CHECK_FALSE(res.degenerate_mad);
    // median 3, MAD 1, scale 1.4826; z clipped to [-3,3] then mapped to [0,1].
    const double expected[] = {0.2751698, 0.3875849, 0.5, 0.6124151, 0.7248302};
    for (int i = 0; i < 5; ++i)
        CHECK(res.volume.data[i] == doctest::Approx(expected[i]).epsilon(1e-6));
}

TEST_CASE("values outside the clip window saturate at 0 and 1") {
    // median 3.5, MAD 1.5: z(100) = 43.4 clips to +3 and maps to 1.
    VolumeGrid v = line_volume({1, 2, 3, 4, 5, 100});
    auto mask = brain_mask(v, 0.0);
    NormalizeResult res = normalize_robust(v, mask, NormalizationParams{});
    CHECK_FALSE(res.degenerate_mad);
    CHECK(res.volume.data[5] == 1.0);
    CHECK(res.volume.data[0] > 0.0);  // unclipped values stay interior
}

TEST_CASE("degenerate MAD maps every masked voxel to 0.5") {
    VolumeGrid v = line_volume({2, 2, 2, 2});
    auto mask = brain_mask(v, 0.0);
    NormalizeResult res = normalize_robust(v, mask, NormalizationParams{});
    CHECK(res.degenerate_mad);
    for (double x : res.volume.data) CHECK(x == 0.5);
}

TEST_CASE("background voxels stay zero after normalization") {
    VolumeGrid v = line_volume({0, 1, 2, 3, 0});
    auto mask = brain_mask(v, 0.0);
    NormalizeResult res = normalize_robust(v, mask, NormalizationParams{});
    CHECK(res.volume.data[0] == 0.0);
    CHECK(res.volume.data[4] == 0.0);
}
