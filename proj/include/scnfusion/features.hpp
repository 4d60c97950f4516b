#pragma once

#include <string>
#include <vector>

#include "scnfusion/nifti.hpp"
#include "scnfusion/preprocess.hpp"

namespace scnfusion {

struct SubjectFeatures {
    std::string subject_id;
    int label = 0;  // HC=0, ADHD=1
    std::vector<double> roi_means;     // R values
    std::vector<double> roi_iqrs;      // R values
    double g_mean = 0, g_std = 0, g_median = 0;
    std::vector<std::uint8_t> empty_roi;  // R flags
    bool degenerate_mad = false;
};

// Per-ROI voxel index lists for one (parcellation, mask) pairing; built once
// per subject grid and reused by the per-descriptor extractors.
struct RoiVoxelIndex {
    std::vector<std::vector<size_t>> voxels;  // [roi] -> voxel indices
};

RoiVoxelIndex build_roi_index(const AtlasParcellation& parcel,
                              const std::vector<std::uint8_t>& mask);

double roi_mean(const VolumeGrid& volume, const RoiVoxelIndex& index, int r,
                bool* empty_flag = nullptr);
double roi_iqr(const VolumeGrid& volume, const RoiVoxelIndex& index, int r,
               bool* empty_flag = nullptr);

struct GlobalStats {
    double mean = 0, stddev = 0, median = 0;  // population (1/N) std
};
GlobalStats global_stats(const VolumeGrid& volume,
                         const std::vector<std::uint8_t>& mask);

SubjectFeatures extract_features(const VolumeGrid& normalized,
                                 const std::vector<std::uint8_t>& mask,
                                 const AtlasParcellation& parcel);

// [roi_iqrs (R) || g_mean, g_std, g_median]; length R+3 (119 for AAL).
std::vector<double> auxiliary_vector(const SubjectFeatures& f);

struct FeatureTable {
    int n_rois = 0;
    std::vector<SubjectFeatures> subjects;

    // N x R matrices over a subject subset (by row index into subjects).
    Matrix means_of(const std::vector<int>& rows) const;
    Matrix iqrs_of(const std::vector<int>& rows) const;
};

// Lines starting with '#' before the header carry run metadata; the reader
// skips them and hands them back via `comments` when asked.
void write_features_csv(const std::string& path, const FeatureTable& table,
                        const std::vector<std::string>& comments = {});
FeatureTable read_features_csv(const std::string& path,
                               std::vector<std::string>* comments = nullptr);

}  // namespace scnfusion
