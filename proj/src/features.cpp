#include "scnfusion/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace scnfusion {

RoiVoxelIndex build_roi_index(const AtlasParcellation& parcel,
                              const std::vector<std::uint8_t>& mask) {
    if (mask.size() != parcel.size())
        throw DataError("mask/parcellation size mismatch");
    int R = parcel.region_count();
    std::unordered_map<int, int> label_to_roi;
    label_to_roi.reserve(R);
    for (int r = 0; r < R; ++r) label_to_roi[parcel.roi_table[r].id] = r;

    RoiVoxelIndex index;
    index.voxels.resize(R);
    for (size_t i = 0; i < parcel.labels.size(); ++i) {
        int lbl = parcel.labels[i];
        if (lbl == 0 || !mask[i]) continue;
        auto it = label_to_roi.find(lbl);
        if (it == label_to_roi.end())
            throw DataError("atlas label " + std::to_string(lbl) +
                            " missing from ROI table");
        index.voxels[it->second].push_back(i);
    }
    return index;
}

double roi_mean(const VolumeGrid& volume, const RoiVoxelIndex& index, int r,
                bool* empty_flag) {
    const auto& vox = index.voxels.at(r);
    if (vox.empty()) {
        if (empty_flag) *empty_flag = true;
        return 0.0;
    }
    if (empty_flag) *empty_flag = false;
    double sum = 0.0;
    for (size_t i : vox) sum += volume.data[i];
    return sum / static_cast<double>(vox.size());
}

double roi_iqr(const VolumeGrid& volume, const RoiVoxelIndex& index, int r,
               bool* empty_flag) {
    const auto& vox = index.voxels.at(r);
    if (vox.size() < 2) {
        if (empty_flag) *empty_flag = true;
        return 0.0;
    }
    if (empty_flag) *empty_flag = false;
    std::vector<double> vals(vox.size());
    for (size_t i = 0; i < vox.size(); ++i) vals[i] = volume.data[vox[i]];
    std::sort(vals.begin(), vals.end());
    auto interp = [&](double p) {
        double h = (static_cast<double>(vals.size()) - 1.0) * p;
        size_t lo = static_cast<size_t>(std::floor(h));
        size_t hi = std::min(lo + 1, vals.size() - 1);
        return vals[lo] + (h - lo) * (vals[hi] - vals[lo]);
    };
    return interp(0.75) - interp(0.25);
}

GlobalStats global_stats(const VolumeGrid& volume,
                         const std::vector<std::uint8_t>& mask) {
    std::vector<double> inside;
    inside.reserve(mask.size());
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) inside.push_back(volume.data[i]);
    if (inside.empty()) throw DataError("global_stats: empty mask");

    GlobalStats gs;
    double sum = 0.0;
    for (double x : inside) sum += x;
    gs.mean = sum / static_cast<double>(inside.size());
    double ss = 0.0;
    for (double x : inside) ss += (x - gs.mean) * (x - gs.mean);
    gs.stddev = std::sqrt(ss / static_cast<double>(inside.size()));
    gs.median = median_of(std::move(inside));
    return gs;
}

SubjectFeatures extract_features(const VolumeGrid& normalized,
                                 const std::vector<std::uint8_t>& mask,
                                 const AtlasParcellation& parcel) {
    int R = parcel.region_count();
    RoiVoxelIndex index = build_roi_index(parcel, mask);

    SubjectFeatures f;
    f.roi_means.resize(R);
    f.roi_iqrs.resize(R);
    f.empty_roi.assign(R, 0);
    for (int r = 0; r < R; ++r) {
        bool empty_mean = false, empty_iqr = false;
        f.roi_means[r] = roi_mean(normalized, index, r, &empty_mean);
        f.roi_iqrs[r] = roi_iqr(normalized, index, r, &empty_iqr);
        // Flag per spec: |V_r| == 0 -> both zeroed; <2 voxels zeroes the IQR only.
        if (empty_mean) f.empty_roi[r] = 1;
    }
    GlobalStats gs = global_stats(normalized, mask);
    f.g_mean = gs.mean;
    f.g_std = gs.stddev;
    f.g_median = gs.median;
    return f;
}

std::vector<double> auxiliary_vector(const SubjectFeatures& f) {
    std::vector<double> aux;
    aux.reserve(f.roi_iqrs.size() + 3);
    aux.insert(aux.end(), f.roi_iqrs.begin(), f.roi_iqrs.end());
    aux.push_back(f.g_mean);
    aux.push_back(f.g_std);
    aux.push_back(f.g_median);
    return aux;
}

Matrix FeatureTable::means_of(const std::vector<int>& rows) const {
    Matrix m(static_cast<int>(rows.size()), n_rois);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int r = 0; r < n_rois; ++r)
            m.at(static_cast<int>(i), r) = subjects[rows[i]].roi_means[r];
    return m;
}

Matrix FeatureTable::iqrs_of(const std::vector<int>& rows) const {
    Matrix m(static_cast<int>(rows.size()), n_rois);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int r = 0; r < n_rois; ++r)
            m.at(static_cast<int>(i), r) = subjects[rows[i]].roi_iqrs[r];
    return m;
}

void write_features_csv(const std::string& path, const FeatureTable& table,
                        const std::vector<std::string>& comments) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write features CSV: " + path);
    int R = table.n_rois;
    for (const std::string& c : comments) f << "# " << c << '\n';
    f << "subject_id,label";
    char col[16];
    for (int r = 0; r < R; ++r) {
        std::snprintf(col, sizeof(col), ",mu_%03d", r);
        f << col;
    }
    for (int r = 0; r < R; ++r) {
        std::snprintf(col, sizeof(col), ",iqr_%03d", r);
        f << col;
    }
    f << ",g_mean,g_std,g_median,flags\n";
    for (const auto& s : table.subjects) {
        f << s.subject_id << ',' << s.label;
        for (int r = 0; r < R; ++r) f << ',' << format_double(s.roi_means[r]);
        for (int r = 0; r < R; ++r) f << ',' << format_double(s.roi_iqrs[r]);
        f << ',' << format_double(s.g_mean) << ',' << format_double(s.g_std)
          << ',' << format_double(s.g_median) << ',';
        // flags: ';'-joined indices of empty ROIs, with "mad" for a
        // degenerate-MAD normalization.
        bool first = true;
        for (int r = 0; r < R; ++r) {
            if (!s.empty_roi[r]) continue;
            if (!first) f << ';';
            f << r;
            first = false;
        }
        if (s.degenerate_mad) {
            if (!first) f << ';';
            f << "mad";
        }
        f << '\n';
    }
    if (!f) throw DataError("short write: " + path);
}

FeatureTable read_features_csv(const std::string& path,
                               std::vector<std::string>* comments) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open features CSV: " + path);
    std::string header;
    while (std::getline(f, header) && !header.empty() && header[0] == '#') {
        if (comments) {
            size_t start = header.find_first_not_of("# \t", 0);
            comments->push_back(start == std::string::npos ? ""
                                                           : header.substr(start));
        }
    }
    if (header.empty()) throw DataError(path + ": empty file");

    // Infer R from the header column count: 2 + 2R + 3 + 1.
    int ncols = 1;
    for (char c : header) ncols += (c == ',');
    int R = (ncols - 6) / 2;
    if (R < 1 || 2 + 2 * R + 4 != ncols)
        throw DataError(path + ": malformed header");

    FeatureTable table;
    table.n_rois = R;
    std::string line;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (static_cast<int>(cells.size()) != ncols)
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": wrong column count");
        SubjectFeatures s;
        s.subject_id = cells[0];
        s.label = std::stoi(cells[1]);
        if (s.label != 0 && s.label != 1)
            throw DataError(path + ":" + std::to_string(lineno) + ": label must be 0/1");
        s.roi_means.resize(R);
        s.roi_iqrs.resize(R);
        s.empty_roi.assign(R, 0);
        for (int r = 0; r < R; ++r) s.roi_means[r] = std::stod(cells[2 + r]);
        for (int r = 0; r < R; ++r) s.roi_iqrs[r] = std::stod(cells[2 + R + r]);
        s.g_mean = std::stod(cells[2 + 2 * R]);
        s.g_std = std::stod(cells[3 + 2 * R]);
        s.g_median = std::stod(cells[4 + 2 * R]);
        const std::string& flags = cells[5 + 2 * R];
        std::stringstream fs(flags);
        std::string tok;
        while (std::getline(fs, tok, ';')) {
            if (tok.empty()) continue;
            if (tok == "mad") {
                s.degenerate_mad = true;
            } else {
                int r = std::stoi(tok);
                if (r < 0 || r >= R)
                    throw DataError(path + ": flag index out of range");
                s.empty_roi[r] = 1;
            }
        }
        table.subjects.push_back(std::move(s));
    }
    return table;
}

}  // namespace scnfusion
