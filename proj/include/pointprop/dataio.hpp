#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pointprop/core_types.hpp"

namespace pointprop::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Byte-level helpers
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const fs::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Points: text, one "x,y" pair per line, optional "x,y" header line.
// ---------------------------------------------------------------------------

PointSet parse_points(const std::string& text);
std::string format_points(const PointSet& points);
PointSet read_points(const fs::path& path);
void write_points(const PointSet& points, const fs::path& path);

// ---------------------------------------------------------------------------
// Probability maps: "PFG1", u32 LE width, u32 LE height, then
// width*height f32 LE values in row-major order.
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_probmap(const ProbMap& map);
ProbMap decode_probmap(std::span<const std::uint8_t> bytes);
ProbMap read_probmap(const fs::path& path);
void write_probmap(const ProbMap& map, const fs::path& path);

// ---------------------------------------------------------------------------
// PNG images
// ---------------------------------------------------------------------------

/// Decoded PNG samples without interpretation. 8- or 16-bit, 1 or 3 channels.
struct RawImage {
    Dims dims;
    int channels = 1;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;  // interleaved, row-major
};

std::vector<std::uint8_t> encode_png(const RawImage& image);
RawImage decode_png(std::span<const std::uint8_t> bytes);

/// 8-bit gray PNG whose pixel values are exactly {0,1,2}.
TriLabelMap read_trilabel(const fs::path& path);
void write_trilabel(const TriLabelMap& map, const fs::path& path);

/// 16-bit gray PNG, 0 = background. Ids are returned as stored.
InstanceMap read_instances(const fs::path& path);
void write_instances(const InstanceMap& map, const fs::path& path);

/// 8-bit RGB PNG; samples are value/255. Gray input is expanded, alpha dropped.
RgbImage read_rgb(const fs::path& path);
void write_rgb(const RgbImage& image, const fs::path& path);

/// 8-bit gray PNG; samples are value/255.
GrayImage read_gray(const fs::path& path);
void write_gray(const GrayImage& image, const fs::path& path);

// ---------------------------------------------------------------------------
// Patch tiling
// ---------------------------------------------------------------------------

struct PatchGrid {
    int patch_size = 0;
    int overlap = 0;
    /// Top-left corners, row-major over the grid (y outer, x inner).
    std::vector<Point> origins;
};

/// Per-axis origins at stride patch_size - overlap; the last origin is
/// clamped to extent - patch_size so the far edge is covered.
std::vector<int> axis_origins(int extent, int patch_size, int overlap);
PatchGrid tile(Dims dims, int patch_size, int overlap);

ProbMap crop(const ProbMap& map, Point origin, Dims size);
RawImage crop(const RawImage& image, Point origin, Dims size);

struct Patch {
    Point origin;
    ProbMap values;
};

/// Per-pixel mean over all patches covering the pixel.
ProbMap stitch(const std::vector<Patch>& patches, Dims dims);

// ---------------------------------------------------------------------------
// Co-training data split
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::uint64_t seed = 0;
    double overlap_ratio = 0.0;
};

struct Split {
    std::vector<std::string> a;
    std::vector<std::string> b;
};

/// Subset size for n ids at overlap ratio r: ceil(n(1+r)/2), at most n.
std::size_t split_subset_size(std::size_t n, double overlap_ratio);
/// Number of ids the two subsets share: floor(r * subset size).
std::size_t split_shared_count(std::size_t n, double overlap_ratio);

Split split_dataset(const std::vector<std::string>& ids, const SplitSpec& spec);

}  // namespace pointprop::io
