#include "scnfusion/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace scnfusion {

namespace fs = std::filesystem;

void CohortSpec::validate() const {
    if (n_per_class < 1) throw ConfigError("cohort: n_per_class must be >= 1");
    for (int d : grid)
        if (d < 32) throw ConfigError("cohort: grid must be at least 32 per axis");
    if (n_rois < 1 || n_rois > 6 * 6 * 6)
        throw ConfigError("cohort: n_rois must be in [1, 216]");
    for (int r : planted_rois)
        if (r < 0 || r >= n_rois)
            throw ConfigError("cohort: planted ROI index out of range");
    if (!std::isfinite(mean_shift_sd) || !std::isfinite(iqr_factor) ||
        !std::isfinite(noise_sd) || !std::isfinite(between_subject_sd))
        throw ConfigError("cohort: effect parameters must be finite");
    if (noise_sd <= 0) throw ConfigError("cohort: noise_sd must be positive");
    if (iqr_factor <= 0) throw ConfigError("cohort: iqr_factor must be positive");
    if (n_networks < 1 || n_networks > n_rois)
        throw ConfigError("cohort: n_networks must be in [1, n_rois]");
}

namespace {

constexpr int kCellsPerAxis = 6;

bool inside_ellipsoid(const std::array<int, 3>& grid, int i, int j, int k) {
    double s = 0;
    const int idx[3] = {i, j, k};
    for (int a = 0; a < 3; ++a) {
        double c = 0.5 * (grid[a] - 1);
        double semi = 0.45 * grid[a];
        double d = (idx[a] - c) / semi;
        s += d * d;
    }
    return s <= 1.0;
}

}  // namespace

AtlasParcellation build_block_atlas(const std::array<int, 3>& grid, int n_rois) {
    const int n_cells = kCellsPerAxis * kCellsPerAxis * kCellsPerAxis;
    std::vector<int> cell_count(n_cells, 0);
    std::vector<int> cell_of(static_cast<size_t>(grid[0]) * grid[1] * grid[2], -1);

    AtlasParcellation atlas;
    atlas.shape = grid;
    atlas.labels.assign(cell_of.size(), 0);

    for (int k = 0; k < grid[2]; ++k) {
        int ck = k * kCellsPerAxis / grid[2];
        for (int j = 0; j < grid[1]; ++j) {
            int cj = j * kCellsPerAxis / grid[1];
            for (int i = 0; i < grid[0]; ++i) {
                if (!inside_ellipsoid(grid, i, j, k)) continue;
                int ci = i * kCellsPerAxis / grid[0];
                int cell = (ck * kCellsPerAxis + cj) * kCellsPerAxis + ci;
                size_t vox = static_cast<size_t>(k) * grid[1] * grid[0] +
                             static_cast<size_t>(j) * grid[0] + i;
                cell_of[vox] = cell;
                ++cell_count[cell];
            }
        }
    }

    // Keep the n_rois best-covered cells; ties break toward lower cell index.
    std::vector<int> order(n_cells);
    for (int c = 0; c < n_cells; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return cell_count[a] > cell_count[b]; });
    if (n_rois > n_cells || cell_count[order[n_rois - 1]] == 0)
        throw DataError("atlas: grid too small to tile the requested ROI count");

    std::vector<int> selected(order.begin(), order.begin() + n_rois);
    std::sort(selected.begin(), selected.end());
    std::vector<int> label_of_cell(n_cells, 0);
    for (int r = 0; r < n_rois; ++r) label_of_cell[selected[r]] = r + 1;

    for (size_t v = 0; v < cell_of.size(); ++v)
        if (cell_of[v] >= 0) atlas.labels[v] = label_of_cell[cell_of[v]];

    atlas.roi_table.resize(n_rois);
    for (int r = 0; r < n_rois; ++r) {
        char name[32];
        std::snprintf(name, sizeof(name), "block_%03d", r);
        atlas.roi_table[r] = {r + 1, name};
    }
    return atlas;
}

CohortArtifacts generate_cohort(const CohortSpec& spec, const std::string& out_dir) {
    spec.validate();
    fs::create_directories(out_dir);

    AtlasParcellation atlas = build_block_atlas(spec.grid, spec.n_rois);

    std::vector<bool> planted(spec.n_rois, false);
    for (int r : spec.planted_rois) planted[r] = true;

    // Per-ROI base intensities shared by all subjects. The spread is kept
    // small against noise_sd so the whole-brain MAD is noise-dominated and a
    // planted shift of k*noise_sd survives normalization as ~k/6 in [0,1].
    Rng base_rng(child_seed(spec.seed, 0x42415345));  // "BASE"
    std::vector<double> base(spec.n_rois);
    for (int r = 0; r < spec.n_rois; ++r)
        base[r] = 580.0 + 40.0 * base_rng.uniform();

    CohortArtifacts art;
    art.data_dir = out_dir;

    VolumeGrid atlas_vol;
    atlas_vol.shape = atlas.shape;
    atlas_vol.affine = atlas.affine;
    atlas_vol.data.assign(atlas.labels.begin(), atlas.labels.end());
    art.atlas_path = (fs::path(out_dir) / "atlas.nii.gz").string();
    write_nifti_file(art.atlas_path, atlas_vol, true, NiftiDatatype::Int16);

    const int n_total = 2 * spec.n_per_class;
    const double shift = spec.mean_shift_sd * spec.noise_sd;
    VolumeGrid vol;
    vol.shape = spec.grid;
    vol.affine = atlas.affine;
    for (int s = 0; s < n_total; ++s) {
        const int label = s < spec.n_per_class ? 0 : 1;  // 0 = control, 1 = ADHD
        char sid[32];
        std::snprintf(sid, sizeof(sid), "sub-%03d", s);
        art.subject_ids.emplace_back(sid);
        art.labels.push_back(label);

        Rng rng(child_seed(spec.seed, 0x53554200ull + static_cast<std::uint64_t>(s)));
        const double amp = 0.9 + 0.2 * rng.uniform();
        // Between-subject mean deviations are independent per ROI; a planted
        // mean shift therefore acts as a shared class factor that shows up in
        // the fold-level correlation matrix as a high-correlation block over
        // the planted ROIs — the relational signature the covariance channels
        // are meant to expose. Within-ROI spread gets an independent per-ROI
        // wobble so dispersion features carry subject-level heterogeneity
        // that the relational channels do not resolve.
        const double dev_scale = spec.between_subject_sd * spec.noise_sd;
        std::vector<double> dev(spec.n_rois), spread(spec.n_rois);
        for (int r = 0; r < spec.n_rois; ++r) {
            dev[r] = rng.normal() * dev_scale;
            spread[r] = spec.noise_sd * std::max(0.2, 1.0 + 0.2 * rng.normal());
        }

        vol.data.assign(vol.size(), 0.0);
        for (size_t v = 0; v < atlas.labels.size(); ++v) {
            int lab = atlas.labels[v];
            if (lab == 0) continue;
            int r = lab - 1;
            double mean = base[r] + dev[r];
            double sd = spread[r];
            if (label == 1 && planted[r]) {
                mean += shift;
                sd *= spec.iqr_factor;
            }
            double value = (mean + rng.normal() * sd) * amp;
            vol.data[v] = std::max(value, 1e-3);
        }
        write_nifti_file((fs::path(out_dir) / (std::string(sid) + ".nii.gz")).string(),
                         vol, true, NiftiDatatype::Float32);
    }

    art.roi_table_path = (fs::path(out_dir) / "rois.tsv").string();
    {
        std::ostringstream os;
        for (const RoiInfo& roi : atlas.roi_table)
            os << roi.id << '\t' << roi.name << '\n';
        std::string s = os.str();
        write_file_bytes(art.roi_table_path,
                         {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    // Contiguous ROI blocks per network, for group-level tests.
    art.network_table_path = (fs::path(out_dir) / "networks.tsv").string();
    {
        std::ostringstream os;
        for (int r = 0; r < spec.n_rois; ++r)
            os << r << '\t' << (r * spec.n_networks / spec.n_rois) << '\n';
        std::string s = os.str();
        write_file_bytes(art.network_table_path,
                         {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    art.labels_path = (fs::path(out_dir) / "labels.csv").string();
    {
        std::ostringstream os;
        os << "subject_id,label\n";
        for (int s = 0; s < n_total; ++s)
            os << art.subject_ids[s] << ',' << art.labels[s] << '\n';
        std::string s = os.str();
        write_file_bytes(art.labels_path,
                         {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    art.ground_truth_path = (fs::path(out_dir) / "ground_truth.json").string();
    {
        nlohmann::json gt;
        gt["n_per_class"] = spec.n_per_class;
        gt["grid"] = spec.grid;
        gt["n_rois"] = spec.n_rois;
        gt["planted_rois"] = spec.planted_rois;
        gt["mean_shift_sd"] = spec.mean_shift_sd;
        gt["iqr_factor"] = spec.iqr_factor;
        gt["noise_sd"] = spec.noise_sd;
        gt["between_subject_sd"] = spec.between_subject_sd;
        gt["n_networks"] = spec.n_networks;
        gt["seed"] = spec.seed;
        std::string s = gt.dump(2);
        s.push_back('\n');
        write_file_bytes(art.ground_truth_path,
                         {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    return art;
}

std::vector<int> load_network_table(const std::string& path, int n_rois) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open network table: " + path);
    std::vector<int> network_of(n_rois, -1);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int roi = -1, net = -1;
        if (!(ls >> roi >> net))
            throw DataError("malformed network table line: " + line);
        if (roi < 0 || roi >= n_rois)
            throw DataError("network table ROI index out of range");
        network_of[roi] = net;
    }
    for (int r = 0; r < n_rois; ++r)
        if (network_of[r] < 0)
            throw DataError("network table missing an ROI assignment");
    return network_of;
}

}  // namespace scnfusion
