#include "scnfusion/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace scnfusion {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void require_keys(const json& obj, const char* section,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw ConfigError(std::string("config: unknown key \"") + it.key() +
                              "\" in " + section);
    }
}

double as_double(const json& j, const char* key) {
    if (!j.at(key).is_number())
        throw ConfigError(std::string("config: ") + key + " must be a number");
    return j.at(key).get<double>();
}

int as_int(const json& j, const char* key) {
    if (!j.at(key).is_number_integer())
        throw ConfigError(std::string("config: ") + key + " must be an integer");
    return j.at(key).get<int>();
}

bool as_bool(const json& j, const char* key) {
    if (!j.at(key).is_boolean())
        throw ConfigError(std::string("config: ") + key + " must be a boolean");
    return j.at(key).get<bool>();
}

std::string as_string(const json& j, const char* key) {
    if (!j.at(key).is_string())
        throw ConfigError(std::string("config: ") + key + " must be a string");
    return j.at(key).get<std::string>();
}

std::string comment_hash_line(const std::string& hash) {
    return "# config_hash=" + hash + "\n";
}

void check_hash_comment(const std::vector<std::string>& comments,
                        const std::string& expect, const std::string& what) {
    for (const std::string& c : comments)
        if (c == "config_hash=" + expect) return;
    throw DataError(what + ": config hash mismatch; artifact belongs to a "
                           "different configuration");
}

void write_text_file(const std::string& path, const std::string& text) {
    write_file_bytes(path,
                     {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text_file(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// First '#' comment lines of a CSV, stripped of the comment marker.
std::vector<std::string> csv_comments(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line) && !line.empty() && line[0] == '#') {
        size_t start = line.find_first_not_of("# \t");
        out.push_back(start == std::string::npos ? "" : line.substr(start));
    }
    return out;
}

struct LabeledSubjects {
    std::vector<std::string> ids;
    std::vector<int> labels;
};

LabeledSubjects load_labels_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels CSV: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "subject_id,label")
        throw DataError(path + ": expected header subject_id,label");
    LabeledSubjects out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError(path + ": malformed row: " + line);
        out.ids.push_back(line.substr(0, comma));
        int label = std::stoi(line.substr(comma + 1));
        if (label != 0 && label != 1)
            throw DataError(path + ": label must be 0 or 1");
        out.labels.push_back(label);
    }
    if (out.ids.empty()) throw DataError(path + ": no subjects");
    return out;
}

AtlasParcellation load_atlas(const std::string& atlas_path,
                             const std::string& roi_table_path) {
    auto [hdr, vol] = parse_nifti_file(atlas_path);
    AtlasParcellation atlas;
    atlas.shape = vol.shape;
    atlas.affine = vol.affine;
    atlas.labels.resize(vol.data.size());
    for (size_t i = 0; i < vol.data.size(); ++i) {
        double v = vol.data[i];
        long long lab = std::llround(v);
        if (std::abs(v - static_cast<double>(lab)) > 1e-6 || lab < 0)
            throw DataError(atlas_path + ": atlas labels must be nonnegative integers");
        atlas.labels[i] = static_cast<std::int32_t>(lab);
    }
    atlas.roi_table = load_roi_table(roi_table_path);
    return atlas;
}

std::string find_volume(const std::string& data_dir, const std::string& id) {
    for (const char* ext : {".nii.gz", ".nii"}) {
        fs::path p = fs::path(data_dir) / (id + ext);
        if (fs::exists(p)) return p.string();
    }
    throw DataError("volume not found for subject " + id + " in " + data_dir);
}

bool same_affine(const Affine& a, const Affine& b) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (std::abs(a[i][j] - b[i][j]) > 1e-9) return false;
    return true;
}

json metrics_to_json(const MetricSet& m) {
    json j;
    j["valid"] = m.valid;
    j["balanced_accuracy"] = m.balanced_accuracy;
    j["precision_weighted"] = m.precision_weighted;
    j["recall_weighted"] = m.recall_weighted;
    j["f1_weighted"] = m.f1_weighted;
    j["precision_macro"] = m.precision_macro;
    j["recall_macro"] = m.recall_macro;
    j["f1_macro"] = m.f1_macro;
    j["auc"] = m.auc;
    j["confusion"] = {{"tp", m.cm.tp}, {"fp", m.cm.fp}, {"tn", m.cm.tn},
                      {"fn", m.cm.fn}};
    return j;
}

// Runs fn(i) for i in [0, n) on up to `jobs` workers; rethrows the first error.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    int workers = std::max(1, std::min(jobs, n));
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

RunConfig load_run_config(const std::string& path, const CliOverrides& overrides) {
    json j;
    try {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path);
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
    require_keys(j, "config root",
                 {"data_dir", "atlas", "roi_table", "network_table", "labels",
                  "out_dir", "seed", "normalization", "train", "interpret",
                  "ablation", "cohort"});

    // Overrides become part of the effective config before hashing.
    if (overrides.seed) j["seed"] = *overrides.seed;
    if (!overrides.ablation.empty()) {
        if (overrides.ablation != "no_aux" && overrides.ablation != "no_ensemble")
            throw ConfigError("unknown ablation: " + overrides.ablation);
        j["ablation"][overrides.ablation] = true;
    }
    if (!overrides.out_dir.empty()) j["out_dir"] = overrides.out_dir;

    RunConfig cfg;
    if (j.contains("data_dir")) cfg.data_dir = as_string(j, "data_dir");
    if (j.contains("atlas")) cfg.atlas_path = as_string(j, "atlas");
    if (j.contains("roi_table")) cfg.roi_table_path = as_string(j, "roi_table");
    if (j.contains("network_table"))
        cfg.network_table_path = as_string(j, "network_table");
    if (j.contains("labels")) cfg.labels_path = as_string(j, "labels");
    if (j.contains("out_dir")) cfg.out_dir = as_string(j, "out_dir");
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir is required");

    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer())
            throw ConfigError("config: seed must be an integer");
        cfg.train.master_seed = j["seed"].get<std::uint64_t>();
    }

    if (j.contains("normalization")) {
        const json& n = j["normalization"];
        require_keys(n, "normalization",
                     {"clip_lo", "clip_hi", "mad_scale", "mask_threshold"});
        if (n.contains("clip_lo")) cfg.norm.clip_lo = as_double(n, "clip_lo");
        if (n.contains("clip_hi")) cfg.norm.clip_hi = as_double(n, "clip_hi");
        if (n.contains("mad_scale")) cfg.norm.mad_scale = as_double(n, "mad_scale");
        if (n.contains("mask_threshold"))
            cfg.norm.mask_threshold = as_double(n, "mask_threshold");
        if (cfg.norm.clip_lo >= cfg.norm.clip_hi)
            throw ConfigError("config: clip_lo must be below clip_hi");
        if (cfg.norm.mad_scale <= 0)
            throw ConfigError("config: mad_scale must be positive");
    }

    if (j.contains("train")) {
        const json& t = j["train"];
        require_keys(t, "train",
                     {"lr", "max_epochs", "patience", "batch_size", "dropout_cnn",
                      "dropout_aux", "alpha", "n_seeds", "n_folds",
                      "inner_val_frac", "class_weighting", "correlation"});
        if (t.contains("lr")) cfg.train.lr = as_double(t, "lr");
        if (t.contains("max_epochs")) cfg.train.max_epochs = as_int(t, "max_epochs");
        if (t.contains("patience")) cfg.train.patience = as_int(t, "patience");
        if (t.contains("batch_size")) cfg.train.batch_size = as_int(t, "batch_size");
        if (t.contains("dropout_cnn"))
            cfg.train.dropout_cnn = as_double(t, "dropout_cnn");
        if (t.contains("dropout_aux"))
            cfg.train.dropout_aux = as_double(t, "dropout_aux");
        if (t.contains("alpha")) cfg.train.alpha = as_double(t, "alpha");
        if (t.contains("n_seeds")) cfg.train.n_seeds = as_int(t, "n_seeds");
        if (t.contains("n_folds")) cfg.train.n_folds = as_int(t, "n_folds");
        if (t.contains("inner_val_frac"))
            cfg.train.inner_val_frac = as_double(t, "inner_val_frac");
        if (t.contains("class_weighting"))
            cfg.train.class_weighting = as_bool(t, "class_weighting");
        if (t.contains("correlation")) {
            std::string corr = as_string(t, "correlation");
            if (corr == "pearson")
                cfg.train.corr = CorrKind::Pearson;
            else if (corr == "spearman")
                cfg.train.corr = CorrKind::Spearman;
            else
                throw ConfigError("config: correlation must be pearson or spearman");
        }
    }

    if (j.contains("interpret")) {
        const json& it = j["interpret"];
        require_keys(it, "interpret", {"percentile", "subjects", "stat_feature"});
        if (it.contains("percentile"))
            cfg.interpret.percentile = as_double(it, "percentile");
        if (cfg.interpret.percentile <= 0 || cfg.interpret.percentile >= 1)
            throw ConfigError("config: percentile must be in (0,1)");
        if (it.contains("subjects")) cfg.interpret.subjects = as_string(it, "subjects");
        if (cfg.interpret.subjects != "all" &&
            cfg.interpret.subjects != "correct_adhd")
            throw ConfigError("config: subjects must be all or correct_adhd");
        if (it.contains("stat_feature"))
            cfg.interpret.stat_feature = as_string(it, "stat_feature");
        if (cfg.interpret.stat_feature != "means" &&
            cfg.interpret.stat_feature != "iqrs")
            throw ConfigError("config: stat_feature must be means or iqrs");
    }

    if (j.contains("ablation")) {
        const json& a = j["ablation"];
        require_keys(a, "ablation", {"no_aux", "no_ensemble"});
        if (a.contains("no_aux")) cfg.train.no_aux = as_bool(a, "no_aux");
        if (a.contains("no_ensemble"))
            cfg.train.no_ensemble = as_bool(a, "no_ensemble");
    }

    if (j.contains("cohort")) {
        const json& c = j["cohort"];
        require_keys(c, "cohort",
                     {"n_per_class", "grid", "n_rois", "planted_rois",
                      "mean_shift_sd", "iqr_factor", "noise_sd",
                      "between_subject_sd", "n_networks", "seed"});
        cfg.has_cohort = true;
        cfg.cohort.seed = cfg.train.master_seed;
        if (c.contains("n_per_class"))
            cfg.cohort.n_per_class = as_int(c, "n_per_class");
        if (c.contains("grid")) {
            const json& g = c["grid"];
            if (!g.is_array() || g.size() != 3)
                throw ConfigError("config: cohort grid must be a 3-array");
            for (int a = 0; a < 3; ++a) cfg.cohort.grid[a] = g[a].get<int>();
        }
        if (c.contains("n_rois")) cfg.cohort.n_rois = as_int(c, "n_rois");
        if (c.contains("planted_rois")) {
            const json& p = c["planted_rois"];
            if (!p.is_array())
                throw ConfigError("config: planted_rois must be an array");
            for (const auto& r : p) cfg.cohort.planted_rois.push_back(r.get<int>());
        }
        if (c.contains("mean_shift_sd"))
            cfg.cohort.mean_shift_sd = as_double(c, "mean_shift_sd");
        if (c.contains("iqr_factor"))
            cfg.cohort.iqr_factor = as_double(c, "iqr_factor");
        if (c.contains("noise_sd")) cfg.cohort.noise_sd = as_double(c, "noise_sd");
        if (c.contains("between_subject_sd"))
            cfg.cohort.between_subject_sd = as_double(c, "between_subject_sd");
        if (c.contains("n_networks")) cfg.cohort.n_networks = as_int(c, "n_networks");
        if (c.contains("seed")) cfg.cohort.seed = c["seed"].get<std::uint64_t>();
        cfg.cohort.validate();
    }

    cfg.train.validate();
    cfg.echo_json = j.dump();
    cfg.config_hash = hash_hex(cfg.echo_json);
    return cfg;
}

void run_synth(const RunConfig& cfg) {
    if (!cfg.has_cohort)
        throw ConfigError("synth: config has no cohort section");
    if (cfg.data_dir.empty())
        throw ConfigError("synth: config needs data_dir for generated volumes");
    generate_cohort(cfg.cohort, cfg.data_dir);
}

void run_extract(const RunConfig& cfg, int jobs) {
    if (cfg.data_dir.empty() || cfg.atlas_path.empty() ||
        cfg.roi_table_path.empty() || cfg.labels_path.empty())
        throw ConfigError("extract: config needs data_dir, atlas, roi_table, labels");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");

    AtlasParcellation atlas = load_atlas(cfg.atlas_path, cfg.roi_table_path);
    LabeledSubjects subjects = load_labels_csv(cfg.labels_path);
    const int n = static_cast<int>(subjects.ids.size());

    FeatureTable table;
    table.n_rois = atlas.region_count();
    table.subjects.resize(n);

    parallel_for(n, jobs, [&](int i) {
        std::string path = find_volume(cfg.data_dir, subjects.ids[i]);
        auto [hdr, vol] = parse_nifti_file(path);
        const AtlasParcellation* parcel = &atlas;
        AtlasParcellation resampled;
        if (vol.shape != atlas.shape || !same_affine(vol.affine, atlas.affine)) {
            resampled = resample_labels_nn(atlas, vol.shape, vol.affine);
            parcel = &resampled;
        }
        std::vector<std::uint8_t> mask = brain_mask(vol, cfg.norm.mask_threshold);
        NormalizeResult norm = normalize_robust(vol, mask, cfg.norm);
        SubjectFeatures f = extract_features(norm.volume, mask, *parcel);
        f.subject_id = subjects.ids[i];
        f.label = subjects.labels[i];
        f.degenerate_mad = norm.degenerate_mad;
        table.subjects[i] = std::move(f);
    });

    fs::create_directories(cfg.out_dir);
    write_features_csv((fs::path(cfg.out_dir) / "features.csv").string(), table,
                       {"config_hash=" + cfg.config_hash});
}

void run_train(const RunConfig& cfg, int jobs) {
    std::string features_path = (fs::path(cfg.out_dir) / "features.csv").string();
    std::vector<std::string> comments;
    FeatureTable table = read_features_csv(features_path, &comments);
    check_hash_comment(comments, cfg.config_hash, features_path);
    std::string features_hash = hash_hex(read_text_file(features_path));

    ModelConfig mc;
    mc.n_rois = table.n_rois;
    mc.aux_dim = table.n_rois + 3;

    std::string ckpt_dir = (fs::path(cfg.out_dir) / "checkpoints").string();
    fs::create_directories(ckpt_dir);

    CvSummary summary =
        run_cross_validation(table, cfg.train, mc, jobs, ckpt_dir);

    const int n_seeds = cfg.train.effective_seeds();
    json out;
    out["config_hash"] = cfg.config_hash;
    out["features_hash"] = features_hash;
    out["config"] = json::parse(cfg.echo_json);
    out["n_subjects"] = table.subjects.size();
    out["n_rois"] = table.n_rois;
    out["audit_ok"] = summary.audit_ok;
    out["best_fold"] = summary.best_fold;
    json folds = json::array();
    for (const FoldReport& fr : summary.folds) {
        json fj;
        fj["fold"] = fr.fold;
        fj["audit_ok"] = fr.audit_ok;
        json ids = json::array();
        for (int r : fr.test_rows) ids.push_back(table.subjects[r].subject_id);
        fj["test_subjects"] = ids;
        json seeds = json::array();
        for (const SeedResult& sr : fr.seeds)
            seeds.push_back({{"best_epoch", sr.best_epoch},
                             {"epochs_run", sr.epochs_run},
                             {"best_val_loss", sr.best_val_loss}});
        fj["seeds"] = seeds;
        fj["metrics"] = metrics_to_json(fr.metrics);
        folds.push_back(fj);
    }
    out["folds"] = folds;
    json agg;
    for (size_t i = 0; i < summary.aggregate.names.size(); ++i)
        agg[summary.aggregate.names[i]] = {{"mean", summary.aggregate.mean[i]},
                                           {"std", summary.aggregate.stddev[i]}};
    agg["valid_folds"] = summary.aggregate.valid_folds;
    out["aggregate"] = agg;
    out["pooled"] = metrics_to_json(summary.aggregate.pooled);
    write_text_file((fs::path(cfg.out_dir) / "cv_summary.json").string(),
                    out.dump(2) + "\n");

    // Per-subject prediction rows, in features-file order.
    struct PredRow {
        int fold = -1;
        std::vector<double> seed_probs;
        double ens_prob = 0;
        int ens_label = 0, true_label = 0;
    };
    std::vector<PredRow> rows(table.subjects.size());
    std::vector<int> pooled_labels;
    std::vector<double> pooled_scores;
    for (const FoldReport& fr : summary.folds) {
        for (size_t i = 0; i < fr.test_rows.size(); ++i) {
            PredRow& pr = rows[fr.test_rows[i]];
            pr.fold = fr.fold;
            for (const SeedResult& sr : fr.seeds)
                pr.seed_probs.push_back(sr.prob_adhd[i]);
            pr.ens_prob = fr.ensemble.mean_probs[i];
            pr.ens_label = fr.ensemble.labels[i];
            pr.true_label = fr.test_labels[i];
            pooled_labels.push_back(fr.test_labels[i]);
            pooled_scores.push_back(fr.ensemble.mean_probs[i]);
        }
    }
    std::ostringstream pcsv;
    pcsv << comment_hash_line(cfg.config_hash);
    pcsv << "subject_id,fold";
    for (int s = 0; s < n_seeds; ++s) pcsv << ",prob_seed" << s;
    pcsv << ",ensemble_prob,ensemble_label,true_label\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const PredRow& pr = rows[i];
        pcsv << table.subjects[i].subject_id << ',' << pr.fold;
        for (double p : pr.seed_probs) pcsv << ',' << format_double(p);
        pcsv << ',' << format_double(pr.ens_prob) << ',' << pr.ens_label << ','
             << pr.true_label << '\n';
    }
    write_text_file((fs::path(cfg.out_dir) / "predictions.csv").string(),
                    pcsv.str());

    std::ostringstream rcsv;
    rcsv << comment_hash_line(cfg.config_hash);
    rcsv << "fpr,tpr\n";
    for (auto [fpr, tpr] : roc_points(pooled_labels, pooled_scores))
        rcsv << format_double(fpr) << ',' << format_double(tpr) << '\n';
    write_text_file((fs::path(cfg.out_dir) / "roc_points.csv").string(),
                    rcsv.str());
}

void run_explain(const RunConfig& cfg, int jobs) {
    std::string features_path = (fs::path(cfg.out_dir) / "features.csv").string();
    std::vector<std::string> comments;
    FeatureTable table = read_features_csv(features_path, &comments);
    check_hash_comment(comments, cfg.config_hash, features_path);
    std::string features_hash = hash_hex(read_text_file(features_path));

    std::string summary_path = (fs::path(cfg.out_dir) / "cv_summary.json").string();
    json summary;
    try {
        summary = json::parse(read_text_file(summary_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(summary_path + ": invalid JSON: " + e.what());
    }
    if (summary.value("config_hash", "") != cfg.config_hash)
        throw DataError(summary_path + ": config hash mismatch; artifact belongs "
                                       "to a different configuration");
    if (summary.value("features_hash", "") != features_hash)
        throw DataError("features.csv changed since training (hash mismatch)");
    const int best_fold = summary.at("best_fold").get<int>();
    if (best_fold < 0) throw DataError("explain: no valid fold to explain");

    const int R = table.n_rois;
    std::vector<int> labels;
    for (const auto& s : table.subjects) labels.push_back(s.label);

    // Reconstruct the best fold's inputs exactly as training saw them.
    FoldPlan plan = make_fold_plan(labels, cfg.train.n_folds, cfg.train.master_seed);
    std::vector<int> train_rows = plan.train_rows(best_fold);
    std::vector<int> test_rows = plan.test_rows(best_fold);
    Matrix group_mu = group_covariance(table.means_of(train_rows), cfg.train.corr);
    Matrix group_iqr = group_covariance(table.iqrs_of(train_rows), cfg.train.corr);

    const int n_test = static_cast<int>(test_rows.size());
    std::vector<Tensor> scn_in(n_test), aux_in(n_test);
    for (int i = 0; i < n_test; ++i) {
        const SubjectFeatures& subj = table.subjects[test_rows[i]];
        ScnTensor scn = build_scn_tensor(subj, group_mu, group_iqr, cfg.train.alpha);
        Tensor t({1, 2, R, R});
        t.v = scn.data;
        scn_in[i] = std::move(t);
        std::vector<double> aux = auxiliary_vector(subj);
        Tensor a({1, static_cast<int>(aux.size())});
        a.v = aux;
        aux_in[i] = std::move(a);
    }

    ModelConfig mc;
    mc.n_rois = R;
    mc.aux_dim = R + 3;
    mc.dropout_cnn = cfg.train.dropout_cnn;
    mc.dropout_aux = cfg.train.dropout_aux;
    mc.no_aux = cfg.train.no_aux;

    const int n_seeds = cfg.train.effective_seeds();
    std::string ckpt_dir = (fs::path(cfg.out_dir) / "checkpoints").string();

    // Per-seed models are independent; per (seed, subject) maps fill fixed slots.
    std::vector<std::vector<std::vector<double>>> seed_scores(
        n_seeds, std::vector<std::vector<double>>(n_test));
    std::vector<std::vector<double>> seed_probs(n_seeds,
                                                std::vector<double>(n_test));
    std::vector<std::vector<int>> seed_preds(n_seeds, std::vector<int>(n_test));
    parallel_for(n_seeds, jobs, [&](int s) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/fold%02d_seed%d.ckpt", best_fold, s);
        Rng dummy(0);
        DuScnFusionNet net(mc, 0, &dummy);
        net.load(ckpt_dir + buf);
        for (int i = 0; i < n_test; ++i) {
            Tensor logits = net.forward(scn_in[i], aux_in[i], Mode::Eval);
            Matrix probs = softmax(logits);
            seed_probs[s][i] = probs.at(0, 1);
            seed_preds[s][i] = probs.at(0, 1) > 0.5 ? 1 : 0;
            Matrix map = gradcam_scn(net, scn_in[i], aux_in[i], 1);
            seed_scores[s][i] = roi_scores(map);
        }
    });

    std::vector<int> keep;
    if (cfg.interpret.subjects == "correct_adhd") {
        EnsembleResult ens = ensemble_vote(seed_preds, seed_probs);
        for (int i = 0; i < n_test; ++i)
            if (labels[test_rows[i]] == 1 && ens.labels[i] == 1) keep.push_back(i);
        if (keep.empty())
            throw DataError("explain: no correctly classified ADHD subjects in "
                            "the best fold");
    } else {
        for (int i = 0; i < n_test; ++i) keep.push_back(i);
    }

    std::vector<std::vector<double>> all_scores;
    for (int s = 0; s < n_seeds; ++s)
        for (int i : keep) all_scores.push_back(seed_scores[s][i]);
    RoiImportance importance = select_biomarkers(all_scores, cfg.interpret.percentile);

    // Group statistics over the whole cohort on the configured descriptor.
    std::vector<int> rows_hc, rows_adhd;
    for (size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 1 ? rows_adhd : rows_hc).push_back(static_cast<int>(i));
    Matrix feat_hc = cfg.interpret.stat_feature == "iqrs" ? table.iqrs_of(rows_hc)
                                                          : table.means_of(rows_hc);
    Matrix feat_adhd = cfg.interpret.stat_feature == "iqrs"
                           ? table.iqrs_of(rows_adhd)
                           : table.means_of(rows_adhd);
    StatReport report = roi_stat_tests(feat_hc, feat_adhd);

    if (!cfg.network_table_path.empty()) {
        std::vector<int> network_of = load_network_table(cfg.network_table_path, R);
        report.network_kw = network_kruskal_wallis(importance.scores, network_of);
        report.network_kw_valid = true;
    }

    std::vector<RoiInfo> roi_table = load_roi_table(cfg.roi_table_path);
    if (static_cast<int>(roi_table.size()) != R)
        throw DataError("ROI table size does not match the feature table");

    std::vector<char> selected_flag(R, 0);
    for (int r : importance.selected) selected_flag[r] = 1;
    std::ostringstream icsv;
    icsv << comment_hash_line(cfg.config_hash);
    icsv << "roi_id,name,score,selected\n";
    for (int r = 0; r < R; ++r)
        icsv << roi_table[r].id << ',' << roi_table[r].name << ','
             << format_double(importance.scores[r]) << ','
             << static_cast<int>(selected_flag[r]) << '\n';
    write_text_file((fs::path(cfg.out_dir) / "roi_importance.csv").string(),
                    icsv.str());

    std::ostringstream scsv;
    scsv << comment_hash_line(cfg.config_hash);
    scsv << "roi_id,t,df,p_raw,p_bonferroni,q_bh,cohens_d,d_valid,mw_u,mw_p\n";
    for (const RoiStatRow& row : report.rows)
        scsv << roi_table[row.roi].id << ',' << format_double(row.t) << ','
             << format_double(row.df) << ',' << format_double(row.p_raw) << ','
             << format_double(row.p_bonferroni) << ',' << format_double(row.q_bh)
             << ',' << format_double(row.cohens_d) << ',' << (row.d_valid ? 1 : 0)
             << ',' << format_double(row.mw_u) << ',' << format_double(row.mw_p)
             << '\n';
    write_text_file((fs::path(cfg.out_dir) / "stats_report.csv").string(),
                    scsv.str());

    json bio;
    bio["config_hash"] = cfg.config_hash;
    bio["best_fold"] = best_fold;
    bio["percentile"] = cfg.interpret.percentile;
    bio["threshold"] = importance.threshold;
    bio["selection_rule"] = "strictly_greater";
    bio["subjects_convention"] = cfg.interpret.subjects;
    bio["target_class"] = "adhd_logit";
    bio["seeds_averaged"] = n_seeds;
    bio["subjects_averaged"] = keep.size();
    json sel = json::array();
    for (int r : importance.selected)
        sel.push_back({{"roi", r},
                       {"roi_id", roi_table[r].id},
                       {"name", roi_table[r].name},
                       {"score", importance.scores[r]}});
    bio["selected"] = sel;
    bio["large_effect_count"] = report.large_effect_count;
    bio["stat_feature"] = cfg.interpret.stat_feature;
    if (report.network_kw_valid)
        bio["network_kruskal_wallis"] = {{"h", report.network_kw.h},
                                         {"p", report.network_kw.p},
                                         {"groups", report.network_kw.groups}};
    // Recovery bookkeeping when the cohort ships its generation record.
    fs::path gt_path = fs::path(cfg.data_dir) / "ground_truth.json";
    if (!cfg.data_dir.empty() && fs::exists(gt_path)) {
        json gt = json::parse(read_text_file(gt_path.string()));
        std::vector<int> planted = gt.value("planted_rois", std::vector<int>{});
        int hits = 0;
        for (int p : planted)
            if (p >= 0 && p < R && selected_flag[p]) ++hits;
        bio["planted_rois"] = planted;
        bio["planted_hits"] = hits;
    }
    write_text_file((fs::path(cfg.out_dir) / "biomarkers.json").string(),
                    bio.dump(2) + "\n");
}

void run_report(const RunConfig& cfg) {
    fs::path out(cfg.out_dir);
    json summary = json::parse(read_text_file((out / "cv_summary.json").string()));
    json bio = json::parse(read_text_file((out / "biomarkers.json").string()));
    std::string importance_csv = read_text_file((out / "roi_importance.csv").string());
    std::string stats_csv = read_text_file((out / "stats_report.csv").string());
    if (summary.value("config_hash", "") != cfg.config_hash ||
        bio.value("config_hash", "") != cfg.config_hash)
        throw DataError("report: config hash mismatch across stage artifacts");
    check_hash_comment(csv_comments(importance_csv), cfg.config_hash,
                       "roi_importance.csv");
    check_hash_comment(csv_comments(stats_csv), cfg.config_hash,
                       "stats_report.csv");

    auto csv_rows = [](const std::string& text) {
        json rows = json::array();
        std::istringstream in(text);
        std::string line, header;
        std::vector<std::string> cols;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cols.empty()) {
                cols = cells;
                continue;
            }
            json row;
            for (size_t i = 0; i < cols.size() && i < cells.size(); ++i)
                row[cols[i]] = cells[i];
            rows.push_back(row);
        }
        return rows;
    };

    json merged;
    merged["config_hash"] = cfg.config_hash;
    merged["cv_summary"] = summary;
    merged["biomarkers"] = bio;
    merged["roi_importance"] = csv_rows(importance_csv);
    merged["stats_report"] = csv_rows(stats_csv);
    write_text_file((out / "report.json").string(), merged.dump(2) + "\n");

    std::ostringstream txt;
    txt << "run report (config " << cfg.config_hash << ")\n";
    txt << "==========================================\n\n";
    txt << "cross-validation (mean +/- std over folds)\n";
    char buf[160];
    const json& agg = summary.at("aggregate");
    for (auto it = agg.begin(); it != agg.end(); ++it) {
        if (!it.value().is_object()) continue;
        std::snprintf(buf, sizeof(buf), "  %-20s %.4f +/- %.4f\n", it.key().c_str(),
                      it.value().at("mean").get<double>(),
                      it.value().at("std").get<double>());
        txt << buf;
    }
    const json& pooled = summary.at("pooled");
    std::snprintf(buf, sizeof(buf),
                  "\npooled: balanced_accuracy %.4f, auc %.4f\n",
                  pooled.at("balanced_accuracy").get<double>(),
                  pooled.at("auc").get<double>());
    txt << buf;
    const json& cm = pooled.at("confusion");
    std::snprintf(buf, sizeof(buf), "confusion: tp %ld fp %ld tn %ld fn %ld\n",
                  cm.at("tp").get<long>(), cm.at("fp").get<long>(),
                  cm.at("tn").get<long>(), cm.at("fn").get<long>());
    txt << buf;
    txt << "audit_ok: " << (summary.at("audit_ok").get<bool>() ? "yes" : "no")
        << "\n";
    txt << "best fold: " << summary.at("best_fold").get<int>() << "\n\n";
    std::snprintf(buf, sizeof(buf),
                  "biomarkers (threshold %.6f, rule strictly greater)\n",
                  bio.at("threshold").get<double>());
    txt << buf;
    for (const json& s : bio.at("selected")) {
        std::snprintf(buf, sizeof(buf), "  roi %3d  %-16s score %.4f\n",
                      s.at("roi").get<int>(),
                      s.at("name").get<std::string>().c_str(),
                      s.at("score").get<double>());
        txt << buf;
    }
    if (bio.contains("planted_hits"))
        txt << "planted-ROI hits: " << bio.at("planted_hits").get<int>() << " of "
            << bio.at("planted_rois").size() << "\n";
    txt << "large effects (|d| > 0.8): " << bio.at("large_effect_count").get<int>()
        << "\n";
    write_text_file((out / "report.txt").string(), txt.str());
}

}  // namespace scnfusion
