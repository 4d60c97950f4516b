#pragma once

#include <array>
#include <string>
#include <vector>

#include "scnfusion/nifti.hpp"
#include "scnfusion/rng.hpp"

namespace scnfusion {

struct CohortSpec {
    int n_per_class = 40;
    std::array<int, 3> grid = {48, 48, 48};
    int n_rois = 116;
    std::vector<int> planted_rois;   // indices getting the class effect
    double mean_shift_sd = 0.0;      // ADHD mean shift, in within-ROI SD units
    double iqr_factor = 1.0;         // ADHD within-ROI noise SD multiplier
    double noise_sd = 30.0;          // within-ROI voxel noise SD
    double between_subject_sd = 0.5; // per-subject ROI offset, fraction of noise_sd
    int n_networks = 8;              // ROI grouping for network-level stats
    std::uint64_t seed = 0;

    void validate() const;
};

struct CohortArtifacts {
    std::string data_dir;
    std::vector<std::string> subject_ids;
    std::vector<int> labels;
    std::string atlas_path, roi_table_path, network_table_path;
    std::string labels_path, ground_truth_path;
};

// Axis-aligned block atlas inside an ellipsoid mask: the grid is cut into
// 6x6x6 cells and the n_rois cells with the largest ellipsoid intersection
// become ROIs, labeled 1..n_rois in cell-index order.
AtlasParcellation build_block_atlas(const std::array<int, 3>& grid, int n_rois);

// Writes <dir>/sub-XXX.nii.gz volumes, atlas.nii.gz, rois.tsv, networks.tsv,
// labels.csv, and ground_truth.json. Regeneration with the same spec is
// bitwise identical.
CohortArtifacts generate_cohort(const CohortSpec& spec, const std::string& out_dir);

// 2-column TSV: roi_index <TAB> network_id. Returns network id per ROI index.
std::vector<int> load_network_table(const std::string& path, int n_rois);

}  // namespace scnfusion
