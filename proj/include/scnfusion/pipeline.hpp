#pragma once

#include <optional>
#include <string>

#include "scnfusion/evaluation.hpp"
#include "scnfusion/interpret.hpp"
#include "scnfusion/synthcohort.hpp"

namespace scnfusion {

struct InterpretConfig {
    double percentile = 0.90;
    std::string subjects = "all";        // or "correct_adhd"
    std::string stat_feature = "means";  // or "iqrs"
};

// Command-line overrides folded into the effective config before hashing.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::string ablation;  // "", "no_aux", "no_ensemble"
    std::string out_dir;   // SCNFUSION_OUT, when set
};

struct RunConfig {
    std::string data_dir, atlas_path, roi_table_path, network_table_path,
        labels_path, out_dir;
    NormalizationParams norm;
    TrainConfig train;
    InterpretConfig interpret;
    CohortSpec cohort;
    bool has_cohort = false;

    std::string config_hash;  // FNV-1a of the effective config, hex
    std::string echo_json;    // effective config, canonical serialization
};

// Strict schema validation: unknown keys and wrong types are refused.
RunConfig load_run_config(const std::string& path, const CliOverrides& overrides);

// Stage entry points; each one reads and writes only files.
void run_synth(const RunConfig& cfg);
void run_extract(const RunConfig& cfg, int jobs);
void run_train(const RunConfig& cfg, int jobs);
void run_explain(const RunConfig& cfg, int jobs);
void run_report(const RunConfig& cfg);

}  // namespace scnfusion
