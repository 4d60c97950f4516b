#include "scnfusion/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace scnfusion {

namespace {

constexpr int kHeaderSize = 348;

template <typename T>
T byteswap_value(T v) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

template <typename T>
T read_at(std::span<const std::uint8_t> bytes, size_t off, bool swap) {
    T v;
    std::memcpy(&v, bytes.data() + off, sizeof(T));
    return swap ? byteswap_value(v) : v;
}

template <typename T>
void put_at(std::vector<std::uint8_t>& out, size_t off, T v) {
    std::memcpy(out.data() + off, &v, sizeof(T));
}

int datatype_bytes(NiftiDatatype dt) {
    switch (dt) {
        case NiftiDatatype::Uint8: return 1;
        case NiftiDatatype::Int16: return 2;
        case NiftiDatatype::Int32: return 4;
        case NiftiDatatype::Float32: return 4;
        case NiftiDatatype::Float64: return 8;
    }
    return 0;
}

Affine qform_to_affine(float b, float c, float d, float ox, float oy, float oz,
                       const std::array<float, 8>& pixdim) {
    double bb = b, cc = c, dd = d;
    double a2 = 1.0 - (bb * bb + cc * cc + dd * dd);
    double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
    double qfac = pixdim[0] < 0.0f ? -1.0 : 1.0;
    double sx = pixdim[1], sy = pixdim[2], sz = pixdim[3];
    if (sx == 0) sx = 1;
    if (sy == 0) sy = 1;
    if (sz == 0) sz = 1;
    Affine m = identity_affine();
    m[0][0] = (a * a + bb * bb - cc * cc - dd * dd) * sx;
    m[0][1] = 2 * (bb * cc - a * dd) * sy;
    m[0][2] = 2 * (bb * dd + a * cc) * sz * qfac;
    m[1][0] = 2 * (bb * cc + a * dd) * sx;
    m[1][1] = (a * a + cc * cc - bb * bb - dd * dd) * sy;
    m[1][2] = 2 * (cc * dd - a * bb) * sz * qfac;
    m[2][0] = 2 * (bb * dd - a * cc) * sx;
    m[2][1] = 2 * (cc * dd + a * bb) * sy;
    m[2][2] = (a * a + dd * dd - bb * bb - cc * cc) * sz * qfac;
    m[0][3] = ox;
    m[1][3] = oy;
    m[2][3] = oz;
    return m;
}

}  // namespace

bool is_gzip(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> raw) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw DataError("deflateInit2 failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, raw.size()) + 32);
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw DataError("gzip compression failed");
    out.resize(zs.total_out);
    return out;
}

std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> gz) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK)
        throw NiftiError("inflateInit2 failed");
    std::vector<std::uint8_t> out;
    out.reserve(gz.size() * 4);
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<Bytef*>(gz.data());
    zs.avail_in = static_cast<uInt>(gz.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw NiftiError("corrupt gzip stream");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (rc != Z_STREAM_END && zs.avail_in > 0);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw NiftiError("truncated gzip stream");
    return out;
}

std::pair<NiftiHeader, VolumeGrid> parse_nifti(std::span<const std::uint8_t> input) {
    std::vector<std::uint8_t> decompressed;
    std::span<const std::uint8_t> bytes = input;
    if (is_gzip(input)) {
        decompressed = gzip_decompress(input);
        bytes = decompressed;
    }
    if (bytes.size() < static_cast<size_t>(kHeaderSize))
        throw NiftiError("truncated file: smaller than the 348-byte header");

    std::int32_t sizeof_hdr = read_at<std::int32_t>(bytes, 0, false);
    bool swap = false;
    if (sizeof_hdr != kHeaderSize) {
        if (byteswap_value(sizeof_hdr) == kHeaderSize) {
            swap = true;
        } else {
            throw NiftiError("bad sizeof_hdr (expected 348); not a NIfTI-1 file");
        }
    }

    char magic[4];
    std::memcpy(magic, bytes.data() + 344, 4);
    if (std::memcmp(magic, "ni1\0", 4) == 0)
        throw NiftiError("NIfTI-1 .hdr/.img pairs are unsupported; use single-file .nii");
    if (std::memcmp(magic, "n+1\0", 4) != 0)
        throw NiftiError("bad magic: not a NIfTI-1 file");

    NiftiHeader hdr;
    hdr.big_endian = swap;
    for (int i = 0; i < 8; ++i)
        hdr.dim[i] = read_at<std::int16_t>(bytes, 40 + 2 * i, swap);
    std::int16_t dt = read_at<std::int16_t>(bytes, 70, swap);
    switch (dt) {
        case 2: case 4: case 8: case 16: case 64:
            hdr.datatype = static_cast<NiftiDatatype>(dt);
            break;
        default:
            throw NiftiError("unsupported datatype code " + std::to_string(dt));
    }
    for (int i = 0; i < 8; ++i)
        hdr.pixdim[i] = read_at<float>(bytes, 76 + 4 * i, swap);
    float vox_offset_f = read_at<float>(bytes, 108, swap);
    hdr.scl_slope = read_at<float>(bytes, 112, swap);
    hdr.scl_inter = read_at<float>(bytes, 116, swap);

    int ndim = hdr.dim[0];
    if (ndim < 3 || ndim > 4)
        throw NiftiError("dim[0]=" + std::to_string(ndim) + " unsupported (need 3 or 4)");
    if (ndim == 4 && hdr.dim[4] != 1)
        throw NiftiError("4D volumes with dim[4]>1 are unsupported (structural scans are 3D)");
    for (int i = 1; i <= 3; ++i)
        if (hdr.dim[i] < 1)
            throw NiftiError("dim[" + std::to_string(i) + "] must be >= 1");

    if (!std::isfinite(vox_offset_f) || vox_offset_f < kHeaderSize)
        throw NiftiError("invalid vox_offset");
    hdr.vox_offset = static_cast<std::int64_t>(vox_offset_f);

    // Affine priority: sform > qform > pixdim diagonal.
    std::int16_t qform_code = read_at<std::int16_t>(bytes, 252, swap);
    std::int16_t sform_code = read_at<std::int16_t>(bytes, 254, swap);
    if (sform_code > 0) {
        hdr.affine_source = AffineSource::Sform;
        Affine m = identity_affine();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                m[r][c] = read_at<float>(bytes, 280 + 16 * r + 4 * c, swap);
        hdr.affine = m;
    } else if (qform_code > 0) {
        hdr.affine_source = AffineSource::Qform;
        hdr.affine = qform_to_affine(read_at<float>(bytes, 256, swap),
                                     read_at<float>(bytes, 260, swap),
                                     read_at<float>(bytes, 264, swap),
                                     read_at<float>(bytes, 268, swap),
                                     read_at<float>(bytes, 272, swap),
                                     read_at<float>(bytes, 276, swap), hdr.pixdim);
    } else {
        hdr.affine_source = AffineSource::Pixdim;
        Affine m = identity_affine();
        for (int i = 0; i < 3; ++i) {
            double p = hdr.pixdim[i + 1];
            m[i][i] = p != 0.0 ? std::abs(p) : 1.0;
        }
        hdr.affine = m;
    }

    VolumeGrid vol;
    vol.shape = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
    vol.affine = hdr.affine;
    size_t n = vol.size();
    int elem = datatype_bytes(hdr.datatype);
    if (bytes.size() < static_cast<size_t>(hdr.vox_offset) + n * elem)
        throw NiftiError("truncated file: payload shorter than dims require");

    double slope = hdr.scl_slope;
    double inter = hdr.scl_inter;
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
        inter = 0.0;
    }
    if (!std::isfinite(inter)) inter = 0.0;

    vol.data.resize(n);
    size_t off = static_cast<size_t>(hdr.vox_offset);
    for (size_t i = 0; i < n; ++i) {
        double raw;
        switch (hdr.datatype) {
            case NiftiDatatype::Uint8:
                raw = bytes[off + i];
                break;
            case NiftiDatatype::Int16:
                raw = read_at<std::int16_t>(bytes, off + 2 * i, swap);
                break;
            case NiftiDatatype::Int32:
                raw = read_at<std::int32_t>(bytes, off + 4 * i, swap);
                break;
            case NiftiDatatype::Float32:
                raw = read_at<float>(bytes, off + 4 * i, swap);
                break;
            case NiftiDatatype::Float64:
                raw = read_at<double>(bytes, off + 8 * i, swap);
                break;
            default:
                raw = 0.0;
        }
        double v = raw * slope + inter;
        if (!std::isfinite(v))
            throw NiftiError("non-finite voxel value after intensity scaling");
        vol.data[i] = v;
    }
    return {hdr, vol};
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write: " + path);
}

std::pair<NiftiHeader, VolumeGrid> parse_nifti_file(const std::string& path) {
    try {
        auto bytes = read_file_bytes(path);
        return parse_nifti(bytes);
    } catch (const NiftiError& e) {
        throw NiftiError(path + ": " + e.what());
    }
}

std::vector<std::uint8_t> write_nifti(const VolumeGrid& volume, bool compress,
                                      NiftiDatatype datatype) {
    size_t n = volume.size();
    if (volume.data.size() != n)
        throw DataError("write_nifti: data length does not match shape");
    int elem = datatype_bytes(datatype);

    std::vector<std::uint8_t> out(352 + n * elem, 0);
    put_at<std::int32_t>(out, 0, kHeaderSize);
    put_at<std::int16_t>(out, 40, 3);
    for (int i = 0; i < 3; ++i)
        put_at<std::int16_t>(out, 42 + 2 * i, static_cast<std::int16_t>(volume.shape[i]));
    for (int i = 4; i <= 7; ++i) put_at<std::int16_t>(out, 40 + 2 * i, 1);
    put_at<std::int16_t>(out, 70, static_cast<std::int16_t>(datatype));
    put_at<std::int16_t>(out, 72, static_cast<std::int16_t>(8 * elem));
    // pixdim from affine column norms; qfac ignored (sform carries orientation).
    put_at<float>(out, 76, 1.0f);
    for (int c = 0; c < 3; ++c) {
        double s = std::sqrt(volume.affine[0][c] * volume.affine[0][c] +
                             volume.affine[1][c] * volume.affine[1][c] +
                             volume.affine[2][c] * volume.affine[2][c]);
        put_at<float>(out, 80 + 4 * c, static_cast<float>(s));
    }
    put_at<float>(out, 108, 352.0f);
    put_at<float>(out, 112, 1.0f);  // scl_slope
    put_at<float>(out, 116, 0.0f);  // scl_inter
    put_at<std::int16_t>(out, 252, 0);  // qform_code
    put_at<std::int16_t>(out, 254, 1);  // sform_code
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            put_at<float>(out, 280 + 16 * r + 4 * c,
                          static_cast<float>(volume.affine[r][c]));
    std::memcpy(out.data() + 344, "n+1\0", 4);

    for (size_t i = 0; i < n; ++i) {
        double v = volume.data[i];
        switch (datatype) {
            case NiftiDatatype::Uint8:
                out[352 + i] = static_cast<std::uint8_t>(std::llround(v));
                break;
            case NiftiDatatype::Int16:
                put_at<std::int16_t>(out, 352 + 2 * i,
                                     static_cast<std::int16_t>(std::llround(v)));
                break;
            case NiftiDatatype::Int32:
                put_at<std::int32_t>(out, 352 + 4 * i,
                                     static_cast<std::int32_t>(std::llround(v)));
                break;
            case NiftiDatatype::Float32:
                put_at<float>(out, 352 + 4 * i, static_cast<float>(v));
                break;
            case NiftiDatatype::Float64:
                put_at<double>(out, 352 + 8 * i, v);
                break;
        }
    }
    if (compress) return gzip_compress(out);
    return out;
}

void write_nifti_file(const std::string& path, const VolumeGrid& volume, bool compress,
                      NiftiDatatype datatype) {
    auto bytes = write_nifti(volume, compress, datatype);
    write_file_bytes(path, bytes);
}

std::vector<RoiInfo> load_roi_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open ROI table: " + path);
    std::vector<RoiInfo> table;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected label_id<TAB>name");
        RoiInfo roi;
        try {
            roi.id = std::stoi(line.substr(0, tab));
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad label id");
        }
        roi.name = line.substr(tab + 1);
        if (!roi.name.empty() && roi.name.back() == '\r') roi.name.pop_back();
        table.push_back(std::move(roi));
    }
    if (table.empty()) throw DataError(path + ": empty ROI table");
    return table;
}

AtlasParcellation resample_labels_nn(const AtlasParcellation& atlas,
                                     const std::array<int, 3>& target_shape,
                                     const Affine& target_affine) {
    Affine atlas_inv = invert_affine(atlas.affine);

    // Compose target voxel -> world -> atlas voxel once.
    Affine compose{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += atlas_inv[i][k] * target_affine[k][j];
            compose[i][j] = s;
        }

    AtlasParcellation out;
    out.shape = target_shape;
    out.affine = target_affine;
    out.roi_table = atlas.roi_table;
    out.labels.assign(static_cast<size_t>(target_shape[0]) * target_shape[1] *
                          target_shape[2],
                      0);
    size_t idx = 0;
    for (int k = 0; k < target_shape[2]; ++k)
        for (int j = 0; j < target_shape[1]; ++j)
            for (int i = 0; i < target_shape[0]; ++i, ++idx) {
                double src[3];
                for (int a = 0; a < 3; ++a)
                    src[a] = compose[a][0] * i + compose[a][1] * j +
                             compose[a][2] * k + compose[a][3];
                // Round half away from zero per axis.
                long long si = std::llround(src[0]);
                long long sj = std::llround(src[1]);
                long long sk = std::llround(src[2]);
                if (si < 0 || sj < 0 || sk < 0 || si >= atlas.shape[0] ||
                    sj >= atlas.shape[1] || sk >= atlas.shape[2])
                    continue;  // stays 0
                out.labels[idx] =
                    atlas.labels[static_cast<size_t>(sk) * atlas.shape[1] * atlas.shape[0] +
                                 static_cast<size_t>(sj) * atlas.shape[0] +
                                 static_cast<size_t>(si)];
            }
    return out;
}

}  // namespace scnfusion
