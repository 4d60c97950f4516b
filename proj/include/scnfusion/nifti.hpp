#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scnfusion/common.hpp"

namespace scnfusion {

// Classified NIfTI parse failure; every malformed input must land here
// (or in DataError for I/O), never in a crash.
struct NiftiError : DataError {
    using DataError::DataError;
};

enum class NiftiDatatype : std::int16_t {
    Uint8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
};

enum class AffineSource { Sform, Qform, Pixdim };

struct NiftiHeader {
    std::array<std::int16_t, 8> dim{};  // dim[0] = rank
    NiftiDatatype datatype = NiftiDatatype::Float32;
    std::array<float, 8> pixdim{};
    float scl_slope = 1.0f;
    float scl_inter = 0.0f;
    std::int64_t vox_offset = 352;
    Affine affine = identity_affine();
    AffineSource affine_source = AffineSource::Pixdim;
    bool big_endian = false;
};

struct VolumeGrid {
    std::array<int, 3> shape{0, 0, 0};
    std::vector<double> data;  // x fastest, then y, then z
    Affine affine = identity_affine();

    size_t size() const {
        return static_cast<size_t>(shape[0]) * shape[1] * shape[2];
    }
    size_t index(int i, int j, int k) const {
        return static_cast<size_t>(k) * shape[1] * shape[0] +
               static_cast<size_t>(j) * shape[0] + i;
    }
    double at(int i, int j, int k) const { return data[index(i, j, k)]; }
    double& at(int i, int j, int k) { return data[index(i, j, k)]; }
};

struct RoiInfo {
    int id = 0;
    std::string name;
};

struct AtlasParcellation {
    std::array<int, 3> shape{0, 0, 0};
    std::vector<std::int32_t> labels;  // same storage order as VolumeGrid
    Affine affine = identity_affine();
    std::vector<RoiInfo> roi_table;  // order defines ROI index 0..R-1

    size_t size() const {
        return static_cast<size_t>(shape[0]) * shape[1] * shape[2];
    }
    int region_count() const { return static_cast<int>(roi_table.size()); }
};

bool is_gzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> raw);
std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> gz);

std::pair<NiftiHeader, VolumeGrid> parse_nifti(std::span<const std::uint8_t> bytes);
std::pair<NiftiHeader, VolumeGrid> parse_nifti_file(const std::string& path);

std::vector<std::uint8_t> write_nifti(const VolumeGrid& volume, bool compress,
                                      NiftiDatatype datatype = NiftiDatatype::Float32);
void write_nifti_file(const std::string& path, const VolumeGrid& volume, bool compress,
                      NiftiDatatype datatype = NiftiDatatype::Float32);

// 2-column TSV: label_id <TAB> name.
std::vector<RoiInfo> load_roi_table(const std::string& path);

// Nearest-neighbor label resampling onto the target grid. Rounding is
// half-away-from-zero per axis; out-of-bounds maps to label 0.
AtlasParcellation resample_labels_nn(const AtlasParcellation& atlas,
                                     const std::array<int, 3>& target_shape,
                                     const Affine& target_affine);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace scnfusion
