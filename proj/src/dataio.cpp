#include "pointprop/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

namespace pointprop::io {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out.flush()) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

void atomic_write(const fs::path& path, const std::string& text) {
    atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

namespace {

bool parse_int(std::string_view s, int& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (s.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

PointSet parse_points(const std::string& text) {
    PointSet points;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line_no == 1 && line == "x,y") {
            continue;
        }
        auto comma = line.find(',');
        Point p;
        if (comma == std::string::npos ||
            !parse_int(std::string_view(line).substr(0, comma), p.x) ||
            !parse_int(std::string_view(line).substr(comma + 1), p.y)) {
            throw ParseError(line_no, "expected \"x,y\" integer pair, got \"" + line + "\"");
        }
        points.push_back(p);
    }
    return points;
}

std::string format_points(const PointSet& points) {
    std::string out;
    for (const auto& p : points) {
        out += std::to_string(p.x);
        out += ',';
        out += std::to_string(p.y);
        out += '\n';
    }
    return out;
}

PointSet read_points(const fs::path& path) {
    auto bytes = read_bytes(path);
    return parse_points(std::string(bytes.begin(), bytes.end()));
}

void write_points(const PointSet& points, const fs::path& path) {
    atomic_write(path, format_points(points));
}

// ---------------------------------------------------------------------------
// PFG1
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::uint8_t, 4> kPfgMagic{'P', 'F', 'G', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_probmap(const ProbMap& map) {
    std::vector<std::uint8_t> out(kPfgMagic.begin(), kPfgMagic.end());
    out.reserve(12 + 4 * map.size());
    put_u32(out, static_cast<std::uint32_t>(map.width()));
    put_u32(out, static_cast<std::uint32_t>(map.height()));
    for (double v : map.values()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

ProbMap decode_probmap(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(kPfgMagic.begin(), kPfgMagic.end(), bytes.begin())) {
        throw FormatError("bad magic");
    }
    if (bytes.size() < 12) {
        throw FormatError("truncated payload");
    }
    const std::uint32_t w = get_u32(bytes.data() + 4);
    const std::uint32_t h = get_u32(bytes.data() + 8);
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20)) {
        throw FormatError("invalid dimensions");
    }
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() < 12 + 4 * n) {
        throw FormatError("truncated payload");
    }
    if (bytes.size() > 12 + 4 * n) {
        throw FormatError("trailing bytes after payload");
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f = std::bit_cast<float>(get_u32(bytes.data() + 12 + 4 * i));
        if (!std::isfinite(f)) {
            throw FormatError("non-finite value");
        }
        values[i] = f;
    }
    return ProbMap({static_cast<int>(w), static_cast<int>(h)}, std::move(values));
}

ProbMap read_probmap(const fs::path& path) {
    return decode_probmap(read_bytes(path));
}

void write_probmap(const ProbMap& map, const fs::path& path) {
    atomic_write(path, encode_probmap(map));
}

// ---------------------------------------------------------------------------
// Typed PNG wrappers
// ---------------------------------------------------------------------------

namespace {

RawImage read_png_file(const fs::path& path) {
    try {
        return decode_png(read_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::uint16_t to_u8(double v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

TriLabelMap read_trilabel(const fs::path& path) {
    RawImage raw = read_png_file(path);
    if (raw.channels != 1 || raw.bit_depth != 8) {
        throw FormatError(path.string() + ": label map must be 8-bit single channel");
    }
    std::vector<std::uint8_t> codes(raw.samples.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (raw.samples[i] > label::kIgnored) {
            throw FormatError(path.string() + ": label value " + std::to_string(raw.samples[i]) +
                              " outside {0,1,2}");
        }
        codes[i] = static_cast<std::uint8_t>(raw.samples[i]);
    }
    return TriLabelMap(raw.dims, std::move(codes));
}

void write_trilabel(const TriLabelMap& map, const fs::path& path) {
    require_valid(map);
    RawImage raw{map.dims(), 1, 8, {map.values().begin(), map.values().end()}};
    atomic_write(path, encode_png(raw));
}

InstanceMap read_instances(const fs::path& path) {
    RawImage raw = read_png_file(path);
    if (raw.channels != 1) {
        throw FormatError(path.string() + ": instance map must be single channel");
    }
    return InstanceMap(raw.dims, {raw.samples.begin(), raw.samples.end()});
}

void write_instances(const InstanceMap& map, const fs::path& path) {
    std::vector<std::uint16_t> samples(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map[i] > 0xFFFF) {
            throw InvalidArgument("instance id exceeds 16-bit range");
        }
        samples[i] = static_cast<std::uint16_t>(map[i]);
    }
    atomic_write(path, encode_png({map.dims(), 1, 16, std::move(samples)}));
}

RgbImage read_rgb(const fs::path& path) {
    RawImage raw = read_png_file(path);
    const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<double> samples(3 * raw.dims.pixels());
    for (std::size_t i = 0; i < raw.dims.pixels(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const int src = raw.channels == 3 ? c : 0;
            samples[3 * i + c] = raw.samples[raw.channels * i + src] / scale;
        }
    }
    return RgbImage(raw.dims, std::move(samples));
}

void write_rgb(const RgbImage& image, const fs::path& path) {
    std::vector<std::uint16_t> samples(image.samples().size());
    std::transform(image.samples().begin(), image.samples().end(), samples.begin(), to_u8);
    atomic_write(path, encode_png({image.dims(), 3, 8, std::move(samples)}));
}

GrayImage read_gray(const fs::path& path) {
    RawImage raw = read_png_file(path);
    if (raw.channels != 1) {
        throw FormatError(path.string() + ": expected a single-channel image");
    }
    const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<double> values(raw.samples.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = raw.samples[i] / scale;
    }
    return GrayImage(raw.dims, std::move(values));
}

void write_gray(const GrayImage& image, const fs::path& path) {
    std::vector<std::uint16_t> samples(image.size());
    std::transform(image.values().begin(), image.values().end(), samples.begin(), to_u8);
    atomic_write(path, encode_png({image.dims(), 1, 8, std::move(samples)}));
}

// ---------------------------------------------------------------------------
// Tiling
// ---------------------------------------------------------------------------

std::vector<int> axis_origins(int extent, int patch_size, int overlap) {
    if (patch_size < 1) {
        throw InvalidArgument("patch size must be positive");
    }
    if (overlap < 0 || overlap >= patch_size) {
        throw InvalidArgument("overlap must be in [0, patch_size)");
    }
    if (patch_size > extent) {
        throw InvalidArgument("patch of " + std::to_string(patch_size) +
                              " px larger than image extent " + std::to_string(extent));
    }
    const int stride = patch_size - overlap;
    std::vector<int> origins;
    int origin = 0;
    for (;;) {
        origins.push_back(origin);
        if (origin + patch_size >= extent) {
            break;
        }
        origin = std::min(origin + stride, extent - patch_size);
    }
    return origins;
}

PatchGrid tile(Dims dims, int patch_size, int overlap) {
    const auto xs = axis_origins(dims.width, patch_size, overlap);
    const auto ys = axis_origins(dims.height, patch_size, overlap);
    PatchGrid grid{patch_size, overlap, {}};
    grid.origins.reserve(xs.size() * ys.size());
    for (int y : ys) {
        for (int x : xs) {
            grid.origins.push_back({x, y});
        }
    }
    return grid;
}

namespace {

void check_window(Dims source, Point origin, Dims size) {
    if (origin.x < 0 || origin.y < 0 || size.width < 1 || size.height < 1 ||
        origin.x + size.width > source.width || origin.y + size.height > source.height) {
        throw InvalidArgument("crop window outside the image");
    }
}

}  // namespace

ProbMap crop(const ProbMap& map, Point origin, Dims size) {
    check_window(map.dims(), origin, size);
    std::vector<double> out;
    out.reserve(size.pixels());
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            out.push_back(map.at(origin.x + x, origin.y + y));
        }
    }
    return ProbMap(size, std::move(out));
}

RawImage crop(const RawImage& image, Point origin, Dims size) {
    check_window(image.dims, origin, size);
    RawImage out{size, image.channels, image.bit_depth, {}};
    out.samples.reserve(size.pixels() * image.channels);
    const auto row_len = static_cast<std::size_t>(image.dims.width) * image.channels;
    for (int y = 0; y < size.height; ++y) {
        auto begin = image.samples.begin() +
                     static_cast<std::ptrdiff_t>((origin.y + y) * row_len +
                                                 static_cast<std::size_t>(origin.x) * image.channels);
        out.samples.insert(out.samples.end(), begin,
                           begin + static_cast<std::ptrdiff_t>(size.width) * image.channels);
    }
    return out;
}

ProbMap stitch(const std::vector<Patch>& patches, Dims dims) {
    if (dims.width < 1 || dims.height < 1) {
        throw InvalidArgument("stitch target must be at least 1x1");
    }
    std::vector<double> sum(dims.pixels(), 0.0);
    std::vector<std::uint32_t> count(dims.pixels(), 0);
    for (const auto& patch : patches) {
        check_window(dims, patch.origin, patch.values.dims());
        for (int y = 0; y < patch.values.height(); ++y) {
            for (int x = 0; x < patch.values.width(); ++x) {
                const auto i = static_cast<std::size_t>(patch.origin.y + y) * dims.width +
                               static_cast<std::size_t>(patch.origin.x + x);
                sum[i] += patch.values.at(x, y);
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
        if (count[i] == 0) {
            throw InvalidArgument("pixel (" + std::to_string(i % dims.width) + "," +
                                  std::to_string(i / dims.width) + ") not covered by any patch");
        }
        sum[i] /= count[i];
    }
    return ProbMap(dims, std::move(sum));
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

namespace {

// Absorbs representation error in products like 20 * 1.6.
constexpr double kRoundingSlack = 1e-9;

void check_ratio(double r) {
    if (!(r >= 0.0 && r <= 1.0)) {
        throw InvalidArgument("overlap ratio must be in [0,1]");
    }
}

}  // namespace

std::size_t split_subset_size(std::size_t n, double overlap_ratio) {
    check_ratio(overlap_ratio);
    const double raw = std::ceil(static_cast<double>(n) * (1.0 + overlap_ratio) / 2.0 - kRoundingSlack);
    return std::min(n, static_cast<std::size_t>(raw));
}

std::size_t split_shared_count(std::size_t n, double overlap_ratio) {
    const auto s = split_subset_size(n, overlap_ratio);
    return static_cast<std::size_t>(std::floor(overlap_ratio * static_cast<double>(s) + kRoundingSlack));
}

Split split_dataset(const std::vector<std::string>& ids, const SplitSpec& spec) {
    if (ids.empty()) {
        throw InvalidArgument("cannot split an empty id list");
    }
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
        throw InvalidArgument("duplicate id in split list");
    }
    const std::size_t n = ids.size();
    const std::size_t size_a = split_subset_size(n, spec.overlap_ratio);
    const std::size_t shared = split_shared_count(n, spec.overlap_ratio);

    std::vector<std::string> order = ids;
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    // A takes the first size_a ids; B takes the last `shared` of those plus
    // as many of the remaining ids as fit, so A and B always cover all ids.
    Split split;
    split.a.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size_a));
    const std::size_t exclusive_b = std::min(n - size_a, size_a - shared);
    split.b.assign(order.begin() + static_cast<std::ptrdiff_t>(size_a - shared),
                   order.begin() + static_cast<std::ptrdiff_t>(size_a + exclusive_b));
    return split;
}

}  // namespace pointprop::io
