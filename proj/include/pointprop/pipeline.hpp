#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointprop/coarse_labels.hpp"
#include "pointprop/label_propagation.hpp"
#include "pointprop/metrics.hpp"
#include "pointprop/stain_separation.hpp"

namespace pointprop::pipeline {

namespace fs = std::filesystem;

/// Every tunable of the toolkit. Serialized as one `key = value` per line;
/// `#` starts a comment.
struct PipelineConfig {
    std::uint64_t seed = 0;
    stain::NmfConfig stain;
    coarse::VoronoiConfig voronoi;
    coarse::ClusterConfig cluster;
    propagation::ScheduleConfig schedule;
    double ema_decay = 0.5;
    int ema_period = 3;
    metrics::EvalConfig eval;
    /// Worker threads for per-image work; 0 picks the hardware concurrency.
    int workers = 1;
};

/// Parses a config file body. Unknown keys, duplicate keys and malformed
/// values raise ParseError; values breaking a module invariant raise
/// InvalidArgument.
PipelineConfig parse_config(const std::string& text);
PipelineConfig read_config(const fs::path& path);

/// Canonical text listing every key in a fixed order; parse_config of the
/// result reproduces the config.
std::string format_config(const PipelineConfig& cfg);

void check(const PipelineConfig& cfg);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

struct PipelineInputs {
    fs::path image_dir;
    fs::path points_dir;
    fs::path out_dir;
    /// Optional `<stem>.pfg` averaged predictions to merge into pseudo labels.
    std::optional<fs::path> pred_dir;
    /// Optional `<stem>.png` 16-bit instance maps to evaluate predictions against.
    std::optional<fs::path> gt_dir;
};

struct PipelineResult {
    std::size_t images = 0;
    fs::path manifest_path;
    std::string manifest_hash;
};

/// Processes every `<stem>.png` in image_dir with its `<stem>.csv` points,
/// writing `<stem>.h.png`, `<stem>.vor.png`, `<stem>.clu.png` (plus
/// `<stem>.pseudo.pfg` and metrics when predictions are supplied) and
/// `manifest.json` into out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineInputs& inputs);

}  // namespace pointprop::pipeline
