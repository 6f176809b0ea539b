#include "pointprop/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pointprop/dataio.hpp"

namespace pointprop::pipeline {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

template <typename T>
std::string to_text(T value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

struct Field {
    std::function<bool(PipelineConfig&, std::string_view)> parse;
    std::function<std::string(const PipelineConfig&)> format;
};

template <typename T>
Field field(T PipelineConfig::*member) {
    return {[member](PipelineConfig& c, std::string_view v) { return parse_number(v, c.*member); },
            [member](const PipelineConfig& c) { return to_text(c.*member); }};
}

template <typename S, typename T>
Field field(S PipelineConfig::*section, T S::*member) {
    return {[section, member](PipelineConfig& c, std::string_view v) { return parse_number(v, c.*section.*member); },
            [section, member](const PipelineConfig& c) { return to_text(c.*section.*member); }};
}

// Ordered: format_config emits keys in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
    using C = PipelineConfig;
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed", field(&C::seed)},
        {"workers", field(&C::workers)},
        {"stain.iters", field(&C::stain, &stain::NmfConfig::iters)},
        {"stain.tol", field(&C::stain, &stain::NmfConfig::tol)},
        {"stain.tissue_threshold", field(&C::stain, &stain::NmfConfig::tissue_threshold)},
        {"stain.tissue_fraction", field(&C::stain, &stain::NmfConfig::tissue_fraction)},
        {"stain.min_column_angle_deg", field(&C::stain, &stain::NmfConfig::min_column_angle_deg)},
        {"voronoi.point_radius", field(&C::voronoi, &coarse::VoronoiConfig::point_radius)},
        {"voronoi.edge_width", field(&C::voronoi, &coarse::VoronoiConfig::edge_width)},
        {"cluster.k", field(&C::cluster, &coarse::ClusterConfig::k)},
        {"cluster.rgb_weight", field(&C::cluster, &coarse::ClusterConfig::rgb_weight)},
        {"cluster.dist_weight", field(&C::cluster, &coarse::ClusterConfig::dist_weight)},
        {"cluster.d_max", field(&C::cluster, &coarse::ClusterConfig::d_max)},
        {"cluster.kmeans_iters", field(&C::cluster, &coarse::ClusterConfig::kmeans_iters)},
        {"cluster.kmeans_tol", field(&C::cluster, &coarse::ClusterConfig::kmeans_tol)},
        {"cluster.min_area", field(&C::cluster, &coarse::ClusterConfig::min_area)},
        {"cluster.opening_radius", field(&C::cluster, &coarse::ClusterConfig::opening_radius)},
        {"schedule.eta", field(&C::schedule, &propagation::ScheduleConfig::eta)},
        {"schedule.epsilon", field(&C::schedule, &propagation::ScheduleConfig::epsilon)},
        {"schedule.n_max", field(&C::schedule, &propagation::ScheduleConfig::n_max)},
        {"ema.decay", field(&C::ema_decay)},
        {"ema.period", field(&C::ema_period)},
        {"eval.threshold", field(&C::eval, &metrics::EvalConfig::threshold)},
        {"eval.min_area", field(&C::eval, &metrics::EvalConfig::min_area)},
    };
    return table;
}

}  // namespace

void check(const PipelineConfig& cfg) {
    coarse::check(cfg.cluster);
    if (cfg.stain.iters < 1 || !(cfg.stain.tol >= 0.0) || !(cfg.stain.tissue_threshold >= 0.0) ||
        !(cfg.stain.tissue_fraction >= 0.0 && cfg.stain.tissue_fraction <= 1.0)) {
        throw InvalidArgument("invalid stain settings");
    }
    if (cfg.voronoi.point_radius < 0 || cfg.voronoi.edge_width < 0) {
        throw InvalidArgument("voronoi radii must be non-negative");
    }
    if (!(cfg.schedule.n_max >= 1.0) || !(cfg.schedule.eta >= 0.0) || !(cfg.schedule.epsilon >= 0.0)) {
        throw InvalidArgument("invalid schedule settings");
    }
    if (!(cfg.ema_decay > 0.0 && cfg.ema_decay <= 1.0) || cfg.ema_period < 1) {
        throw InvalidArgument("ema.decay must be in (0,1] and ema.period >= 1");
    }
    if (!(cfg.eval.threshold >= 0.0 && cfg.eval.threshold <= 1.0) || cfg.eval.min_area < 0) {
        throw InvalidArgument("invalid eval settings");
    }
    if (cfg.workers < 0) {
        throw InvalidArgument("workers must be non-negative");
    }
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(line_no, "expected key = value");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
        if (it == table.end()) {
            throw ParseError(line_no, "unknown key \"" + key + "\"");
        }
        if (!seen.insert(key).second) {
            throw ParseError(line_no, "duplicate key \"" + key + "\"");
        }
        if (!it->second.parse(cfg, value)) {
            throw ParseError(line_no, "invalid value \"" + std::string(value) + "\" for " + key);
        }
    }
    check(cfg);
    return cfg;
}

PipelineConfig read_config(const fs::path& path) {
    const auto bytes = io::read_bytes(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& [key, f] : fields()) {
        out += key + " = " + f.format(cfg) + "\n";
    }
    return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_hex(const std::string& text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

using nlohmann::ordered_json;

std::map<std::string, fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            out.emplace(entry.path().stem().string(), entry.path());
        }
    }
    return out;
}

ordered_json file_entry(const fs::path& path) {
    return {{"name", path.filename().string()}, {"sha256", sha256_hex(io::read_bytes(path))}};
}

ordered_json process_one(const PipelineConfig& cfg, const PipelineInputs& inputs, const std::string& stem,
                         const fs::path& image_path, const fs::path& points_path) {
    const RgbImage image = io::read_rgb(image_path);
    const PointSet points = io::read_points(points_path);
    if (auto violation = validate(points, image.dims())) {
        throw InvalidArgument(points_path.filename().string() + ": " + *violation);
    }

    ordered_json item;
    item["stem"] = stem;
    item["inputs"] = {{"image", file_entry(image_path)}, {"points", file_entry(points_path)}};

    // The top-level seed drives every seeded stage.
    stain::NmfConfig nmf = cfg.stain;
    nmf.seed = cfg.seed;
    coarse::ClusterConfig cluster = cfg.cluster;
    cluster.seed = cfg.seed;

    const auto estimate = stain::estimate_stains(stain::to_od(image), nmf);
    const GrayImage h_gray = stain::collapse_to_gray(stain::reconstruct_component(
        image.illumination(), estimate.model, estimate.density, stain::Component::Hematoxylin));
    item["stain_model"] = estimate.model.appearance;

    const TriLabelMap vor = coarse::voronoi_label(points, image.dims(), cfg.voronoi);
    const TriLabelMap clu = coarse::cluster_label(image, points, cluster);

    std::vector<fs::path> outputs;
    outputs.push_back(inputs.out_dir / (stem + ".h.png"));
    io::write_gray(h_gray, outputs.back());
    outputs.push_back(inputs.out_dir / (stem + ".vor.png"));
    io::write_trilabel(vor, outputs.back());
    outputs.push_back(inputs.out_dir / (stem + ".clu.png"));
    io::write_trilabel(clu, outputs.back());

    if (inputs.pred_dir) {
        const fs::path pred_path = *inputs.pred_dir / (stem + ".pfg");
        if (fs::exists(pred_path)) {
            const ProbMap pred = io::read_probmap(pred_path);
            require_valid(pred);
            outputs.push_back(inputs.out_dir / (stem + ".pseudo.pfg"));
            io::write_probmap(propagation::merge_pseudo(pred, clu), outputs.back());
            if (inputs.gt_dir) {
                const fs::path gt_path = *inputs.gt_dir / (stem + ".png");
                if (fs::exists(gt_path)) {
                    const auto report = metrics::evaluate(pred, io::read_instances(gt_path), cfg.eval);
                    item["metrics"] = {{"acc", report.accuracy},
                                       {"f1", report.f1},
                                       {"dice_obj", report.dice_obj},
                                       {"aji", report.aji}};
                }
            }
        }
    }

    item["outputs"] = ordered_json::array();
    for (const auto& path : outputs) {
        item["outputs"].push_back(file_entry(path));
    }
    return item;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineInputs& inputs) {
    check(cfg);
    const auto images = files_with_extension(inputs.image_dir, ".png");
    const auto points = files_with_extension(inputs.points_dir, ".csv");
    for (const auto& [stem, path] : images) {
        if (!points.contains(stem)) {
            throw InvalidArgument("no points file " + stem + ".csv for image " + path.filename().string());
        }
    }
    for (const auto& [stem, path] : points) {
        if (!images.contains(stem)) {
            throw InvalidArgument("no image " + stem + ".png for points file " + path.filename().string());
        }
    }
    fs::create_directories(inputs.out_dir);

    std::vector<std::string> stems;
    for (const auto& [stem, path] : images) stems.push_back(stem);

    std::vector<ordered_json> items(stems.size());
    std::vector<std::exception_ptr> errors(stems.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < stems.size(); i = next++) {
            try {
                items[i] = process_one(cfg, inputs, stems[i], images.at(stems[i]), points.at(stems[i]));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t thread_count =
        std::min<std::size_t>(stems.size(), cfg.workers == 0 ? hw : static_cast<unsigned>(cfg.workers));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            throw Error(stems[i] + ": " + e.what());
        }
    }

    ordered_json manifest;
    manifest["config_hash"] = sha256_hex(format_config(cfg));
    manifest["seed"] = cfg.seed;
    manifest["items"] = ordered_json::array();
    for (auto& item : items) manifest["items"].push_back(std::move(item));

    const std::string text = manifest.dump(2) + "\n";
    PipelineResult result;
    result.images = stems.size();
    result.manifest_path = inputs.out_dir / "manifest.json";
    io::atomic_write(result.manifest_path, text);
    result.manifest_hash = sha256_hex(text);
    return result;
}

}  // namespace pointprop::pipeline
