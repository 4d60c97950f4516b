#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "scnfusion/synthcohort.hpp"

using namespace scnfusion;
namespace fs = std::filesystem;

TEST_CASE("block atlas tiles the requested ROI count inside the ellipsoid") {
    for (std::array<int, 3> grid : {std::array<int, 3>{48, 48, 48},
                                    std::array<int, 3>{32, 32, 32}}) {
        AtlasParcellation atlas = build_block_atlas(grid, 116);
        CHECK(atlas.region_count() == 116);
        std::map<int, int> counts;
        for (int lab : atlas.labels)
            if (lab != 0) ++counts[lab];
        CHECK(counts.size() == 116);  // every ROI nonempty
        for (auto& [lab, cnt] : counts) {
            CHECK(lab >= 1);
            CHECK(lab <= 116);
            CHECK(cnt > 0);
        }
        // Background exists (ellipsoid corners are outside).
        CHECK(atlas.labels[0] == 0);
    }
}

TEST_CASE("cohort spec validation") {
    CohortSpec spec;
    CHECK_NOTHROW(spec.validate());
    spec.grid = {16, 48, 48};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = CohortSpec{};
    spec.planted_rois = {200};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = CohortSpec{};
    spec.noise_sd = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = CohortSpec{};
    spec.iqr_factor = -1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("generation is deterministic and artifacts parse back") {
    CohortSpec spec;
    spec.n_per_class = 2;
    spec.grid = {32, 32, 32};
    spec.planted_rois = {3, 7};
    spec.mean_shift_sd = 1.5;
    spec.iqr_factor = 1.5;
    spec.seed = 11;

    fs::path dir1 = fs::temp_directory_path() / "scnf_cohort_a";
    fs::path dir2 = fs::temp_directory_path() / "scnf_cohort_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    CohortArtifacts a = generate_cohort(spec, dir1.string());
    CohortArtifacts b = generate_cohort(spec, dir2.string());
    CHECK(a.subject_ids.size() == 4);
    CHECK(a.labels == std::vector<int>{0, 0, 1, 1});

    for (const std::string& id : a.subject_ids) {
        auto f1 = read_file_bytes((dir1 / (id + ".nii.gz")).string());
        auto f2 = read_file_bytes((dir2 / (id + ".nii.gz")).string());
        CHECK(f1 == f2);  // bitwise reproducible
    }
    CHECK(read_file_bytes(a.atlas_path) ==
          read_file_bytes((dir2 / "atlas.nii.gz").string()));

    // Volumes parse and satisfy the mask rule: positive brain, zero background.
    auto [hdr, vol] = parse_nifti_file((dir1 / "sub-000.nii.gz").string());
    CHECK(vol.shape == spec.grid);
    auto [ahdr, avol] = parse_nifti_file(a.atlas_path);
    int brain = 0;
    for (size_t i = 0; i < vol.data.size(); ++i) {
        if (avol.data[i] != 0.0) {
            CHECK(vol.data[i] > 0.0);
            ++brain;
        } else {
            CHECK(vol.data[i] == 0.0);
        }
    }
    CHECK(brain > 1000);

    // Tables are consistent.
    auto rois = load_roi_table(a.roi_table_path);
    CHECK(rois.size() == 116);
    auto networks = load_network_table(a.network_table_path, 116);
    std::set<int> nets(networks.begin(), networks.end());
    CHECK(nets.size() == static_cast<size_t>(spec.n_networks));
}

TEST_CASE("planted mean shift separates the classes at the ROI level") {
    CohortSpec spec;
    spec.n_per_class = 5;
    spec.grid = {32, 32, 32};
    spec.planted_rois = {10};
    spec.mean_shift_sd = 2.0;
    spec.noise_sd = 30.0;
    spec.seed = 21;

    fs::path dir = fs::temp_directory_path() / "scnf_cohort_shift";
    fs::remove_all(dir);
    CohortArtifacts art = generate_cohort(spec, dir.string());
    auto [ahdr, avol] = parse_nifti_file(art.atlas_path);

    auto roi_raw_mean = [&](const VolumeGrid& v, int roi) {
        double sum = 0;
        int n = 0;
        for (size_t i = 0; i < v.data.size(); ++i)
            if (avol.data[i] == roi + 1.0) {
                sum += v.data[i];
                ++n;
            }
        return sum / n;
    };

    double hc = 0, adhd = 0, hc_other = 0, adhd_other = 0;
    for (int s = 0; s < 10; ++s) {
        auto [hdr, vol] =
            parse_nifti_file((dir / (art.subject_ids[s] + ".nii.gz")).string());
        // Amplitude scaling is subject-global; the ratio to a reference ROI
        // isolates the planted shift.
        double planted_mean = roi_raw_mean(vol, 10) / roi_raw_mean(vol, 50);
        if (art.labels[s] == 0) {
            hc += planted_mean;
            hc_other += roi_raw_mean(vol, 20) / roi_raw_mean(vol, 50);
        } else {
            adhd += planted_mean;
            adhd_other += roi_raw_mean(vol, 20) / roi_raw_mean(vol, 50);
        }
    }
    // 2 SD shift = 60 intensity units on a base of roughly 400..800.
    CHECK(adhd / 5 > hc / 5 * 1.04);
    CHECK(std::abs(adhd_other - hc_other) / 5 < 0.08);  // unplanted ROI is flat
}

TEST_CASE("null effect leaves the classes exchangeable by construction") {
    CohortSpec spec;
    spec.n_per_class = 2;
    spec.grid = {32, 32, 32};
    spec.mean_shift_sd = 0.0;
    spec.iqr_factor = 1.0;
    spec.planted_rois = {1, 2, 3};
    spec.seed = 31;
    fs::path dir = fs::temp_directory_path() / "scnf_cohort_null";
    fs::remove_all(dir);
    CohortArtifacts art = generate_cohort(spec, dir.string());
    // With zero effect the generator applies no class-dependent term; the
    // ground truth file still records the (inert) planted set.
    CHECK(fs::exists(art.ground_truth_path));
}
