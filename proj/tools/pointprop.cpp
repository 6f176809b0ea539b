// pointprop: command line front end for the label propagation toolkit.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pointprop/coarse_labels.hpp"
#include "pointprop/dataio.hpp"
#include "pointprop/label_propagation.hpp"
#include "pointprop/metrics.hpp"
#include "pointprop/pipeline.hpp"
#include "pointprop/stain_separation.hpp"

namespace fs = std::filesystem;
using namespace pointprop;

namespace {

Dims parse_size(const std::string& text) {
    static const std::regex pattern(R"((\d+)[xX](\d+))");
    std::smatch m;
    if (!std::regex_match(text, m, pattern)) {
        throw InvalidArgument("size must look like WxH, got \"" + text + "\"");
    }
    return {std::stoi(m[1]), std::stoi(m[2])};
}

std::string fixed(double v, int decimals) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(decimals) << v;
    return out.str();
}

ProbMap read_valid_probmap(const fs::path& path) {
    ProbMap map = io::read_probmap(path);
    if (auto violation = validate(map)) {
        throw InvalidArgument(path.string() + ": " + *violation);
    }
    return map;
}

std::vector<std::string> read_id_list(const fs::path& path) {
    std::vector<std::string> ids;
    std::istringstream in([&] {
        auto bytes = io::read_bytes(path);
        return std::string(bytes.begin(), bytes.end());
    }());
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

/// Patch files are named <anything>_<x>_<y>.pfg.
io::Patch read_patch(const fs::path& path) {
    static const std::regex pattern(R"(.*_(\d+)_(\d+)\.pfg)");
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, pattern)) {
        throw InvalidArgument("patch file name must end in _<x>_<y>.pfg: " + name);
    }
    return {{std::stoi(m[1]), std::stoi(m[2])}, read_valid_probmap(path)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-annotation label propagation toolkit for nuclei segmentation"};
    app.require_subcommand(1);
    std::function<void()> action;

    // stain-separate -------------------------------------------------------
    struct {
        std::string in, out_h, out_e, out_model;
        stain::NmfConfig nmf;
        bool color = false;
    } ss;
    auto* cmd_stain = app.add_subcommand("stain-separate", "Estimate stains and write H/E component images");
    cmd_stain->add_option("--in", ss.in, "H&E image (PNG)")->required();
    cmd_stain->add_option("--out-h", ss.out_h, "Hematoxylin component PNG")->required();
    cmd_stain->add_option("--out-e", ss.out_e, "Eosin component PNG");
    cmd_stain->add_option("--out-model", ss.out_model, "Stain model text file");
    cmd_stain->add_option("--iters", ss.nmf.iters, "NMF iterations")->capture_default_str();
    cmd_stain->add_option("--tol", ss.nmf.tol, "Relative objective tolerance")->capture_default_str();
    cmd_stain->add_option("--seed", ss.nmf.seed, "Seed")->capture_default_str();
    cmd_stain->add_option("--tissue-threshold", ss.nmf.tissue_threshold, "OD norm marking tissue")
        ->capture_default_str();
    cmd_stain->add_flag("--color", ss.color, "Write RGB components instead of gray");
    cmd_stain->callback([&] {
        action = [&] {
            const RgbImage image = io::read_rgb(ss.in);
            const auto est = stain::estimate_stains(stain::to_od(image), ss.nmf);
            auto emit = [&](stain::Component which, const std::string& path) {
                const RgbImage rgb =
                    stain::reconstruct_component(image.illumination(), est.model, est.density, which);
                if (ss.color) io::write_rgb(rgb, path);
                else io::write_gray(stain::collapse_to_gray(rgb), path);
            };
            emit(stain::Component::Hematoxylin, ss.out_h);
            if (!ss.out_e.empty()) emit(stain::Component::Eosin, ss.out_e);
            if (!ss.out_model.empty()) stain::write_stain_model(est.model, ss.out_model);
        };
    });

    // gen-voronoi ----------------------------------------------------------
    struct {
        std::string points, size, out;
        coarse::VoronoiConfig cfg;
    } gv;
    auto* cmd_vor = app.add_subcommand("gen-voronoi", "Rasterize a Voronoi label map from points");
    cmd_vor->add_option("--points", gv.points, "Points CSV")->required();
    cmd_vor->add_option("--size", gv.size, "Image size WxH")->required();
    cmd_vor->add_option("--out", gv.out, "Output label PNG")->required();
    cmd_vor->add_option("--point-radius", gv.cfg.point_radius)->capture_default_str();
    cmd_vor->add_option("--edge-width", gv.cfg.edge_width)->capture_default_str();
    cmd_vor->callback([&] {
        action = [&] {
            io::write_trilabel(coarse::voronoi_label(io::read_points(gv.points), parse_size(gv.size), gv.cfg),
                               gv.out);
        };
    });

    // gen-cluster ----------------------------------------------------------
    struct {
        std::string image, points, out;
        coarse::ClusterConfig cfg;
    } gc;
    auto* cmd_clu = app.add_subcommand("gen-cluster", "Build a k-means cluster label map");
    cmd_clu->add_option("--image", gc.image, "H&E image (PNG)")->required();
    cmd_clu->add_option("--points", gc.points, "Points CSV")->required();
    cmd_clu->add_option("--out", gc.out, "Output label PNG")->required();
    cmd_clu->add_option("--seed", gc.cfg.seed)->capture_default_str();
    cmd_clu->add_option("--dmax", gc.cfg.d_max)->capture_default_str();
    cmd_clu->add_option("--min-area", gc.cfg.min_area)->capture_default_str();
    cmd_clu->add_option("--opening-radius", gc.cfg.opening_radius)->capture_default_str();
    cmd_clu->add_option("--rgb-weight", gc.cfg.rgb_weight)->capture_default_str();
    cmd_clu->add_option("--dist-weight", gc.cfg.dist_weight)->capture_default_str();
    cmd_clu->add_option("--iters", gc.cfg.kmeans_iters)->capture_default_str();
    cmd_clu->callback([&] {
        action = [&] {
            io::write_trilabel(coarse::cluster_label(io::read_rgb(gc.image), io::read_points(gc.points), gc.cfg),
                               gc.out);
        };
    });

    // ema ------------------------------------------------------------------
    struct {
        std::string state, pred, out;
        double decay = 0.5;
    } em;
    auto* cmd_ema = app.add_subcommand("ema", "Fold a prediction into a running average");
    cmd_ema->add_option("--state", em.state, "Current average (PFG1); missing file starts a new average")
        ->required();
    cmd_ema->add_option("--pred", em.pred, "New prediction (PFG1)")->required();
    cmd_ema->add_option("--decay", em.decay, "Weight of the new prediction")->capture_default_str();
    cmd_ema->add_option("--out", em.out, "Updated average (PFG1)")->required();
    cmd_ema->callback([&] {
        action = [&] {
            propagation::EmaState state;
            state.decay = em.decay;
            if (fs::exists(em.state)) {
                state.average = read_valid_probmap(em.state);
                state.step = 1;
            }
            const auto next = propagation::ema_update(state, read_valid_probmap(em.pred));
            io::write_probmap(*next.average, em.out);
        };
    });

    // merge ----------------------------------------------------------------
    struct {
        std::string ema, cluster, out;
    } mg;
    auto* cmd_merge = app.add_subcommand("merge", "Combine an averaged prediction with a cluster label");
    cmd_merge->add_option("--ema", mg.ema, "Averaged prediction (PFG1)")->required();
    cmd_merge->add_option("--cluster", mg.cluster, "Cluster label PNG")->required();
    cmd_merge->add_option("--out", mg.out, "Pseudo label (PFG1)")->required();
    cmd_merge->callback([&] {
        action = [&] {
            io::write_probmap(propagation::merge_pseudo(read_valid_probmap(mg.ema), io::read_trilabel(mg.cluster)),
                              mg.out);
        };
    });

    // loss -----------------------------------------------------------------
    struct {
        std::string kind, pred, labels, pseudo, target;
        bool positive_only = false;
    } ls;
    auto* cmd_loss = app.add_subcommand("loss", "Evaluate a reference loss and print it");
    cmd_loss->add_option("kind", ls.kind, "vor | clu | cot | color")
        ->required()
        ->check(CLI::IsMember({"vor", "clu", "cot", "color"}));
    cmd_loss->add_option("--pred", ls.pred, "Prediction (PFG1; PNG for color)")->required();
    cmd_loss->add_option("--labels", ls.labels, "Voronoi or cluster label PNG (vor, clu)");
    cmd_loss->add_option("--pseudo", ls.pseudo, "Pseudo label PFG1 (cot)");
    cmd_loss->add_option("--target", ls.target, "Target H&E PNG (color)");
    cmd_loss->add_flag("--positive-only", ls.positive_only, "cot: nucleus-class term only");
    cmd_loss->callback([&] {
        action = [&] {
            auto need = [](const std::string& v, const char* flag) {
                if (v.empty()) throw InvalidArgument(std::string(flag) + " is required for this loss");
            };
            double value = 0.0;
            if (ls.kind == "vor" || ls.kind == "clu") {
                need(ls.labels, "--labels");
                value = propagation::partial_ce_loss(read_valid_probmap(ls.pred), io::read_trilabel(ls.labels));
            } else if (ls.kind == "cot") {
                need(ls.pseudo, "--pseudo");
                value = propagation::kl_cot_loss(
                    read_valid_probmap(ls.pseudo), read_valid_probmap(ls.pred),
                    ls.positive_only ? propagation::KlVariant::PositiveOnly : propagation::KlVariant::Binary);
            } else {
                need(ls.target, "--target");
                value = propagation::colorization_loss(io::read_rgb(ls.pred), io::read_rgb(ls.target));
            }
            std::cout << fixed(value, 9) << '\n';
        };
    });

    // eval -----------------------------------------------------------------
    struct {
        std::string pred, gt;
        metrics::EvalConfig cfg;
    } ev;
    auto* cmd_eval = app.add_subcommand("eval", "Score a prediction against a ground-truth instance map");
    cmd_eval->add_option("--pred", ev.pred, "Prediction (PFG1)")->required();
    cmd_eval->add_option("--gt", ev.gt, "Ground-truth instance map (16-bit PNG)")->required();
    cmd_eval->add_option("--threshold", ev.cfg.threshold)->capture_default_str();
    cmd_eval->add_option("--min-area", ev.cfg.min_area)->capture_default_str();
    cmd_eval->callback([&] {
        action = [&] {
            const auto r = metrics::evaluate(read_valid_probmap(ev.pred), io::read_instances(ev.gt), ev.cfg);
            std::cout << "acc=" << fixed(r.accuracy, 4) << " f1=" << fixed(r.f1, 4)
                      << " dice_obj=" << fixed(r.dice_obj, 4) << " aji=" << fixed(r.aji, 4) << '\n';
        };
    });

    // perturb --------------------------------------------------------------
    struct {
        std::string points, out, size, image;
        int shift = 0;
        std::uint64_t seed = 0;
    } pt;
    auto* cmd_perturb = app.add_subcommand("perturb", "Randomly shift point annotations");
    cmd_perturb->add_option("--points", pt.points, "Points CSV")->required();
    cmd_perturb->add_option("--shift", pt.shift, "Maximum shift per axis (pixels)")->required();
    cmd_perturb->add_option("--seed", pt.seed)->capture_default_str();
    cmd_perturb->add_option("--out", pt.out, "Output points CSV")->required();
    auto* size_opt = cmd_perturb->add_option("--size", pt.size, "Image size WxH for clamping");
    auto* image_opt = cmd_perturb->add_option("--image", pt.image, "Take the image size from this PNG");
    size_opt->excludes(image_opt);
    cmd_perturb->callback([&] {
        action = [&] {
            Dims dims;
            if (!pt.size.empty()) dims = parse_size(pt.size);
            else if (!pt.image.empty()) dims = io::decode_png(io::read_bytes(pt.image)).dims;
            else throw InvalidArgument("perturb needs --size or --image");
            io::write_points(metrics::perturb_points(io::read_points(pt.points), pt.shift, pt.seed, dims), pt.out);
        };
    });

    // split ----------------------------------------------------------------
    struct {
        std::string ids, ids_dir, out;
        io::SplitSpec spec;
    } sp;
    auto* cmd_split = app.add_subcommand("split", "Split image ids into two co-training subsets");
    auto* ids_opt = cmd_split->add_option("--ids", sp.ids, "Text file with one id per line");
    auto* dir_opt = cmd_split->add_option("--ids-dir", sp.ids_dir, "Use the stems of the PNG files here");
    ids_opt->excludes(dir_opt);
    cmd_split->add_option("--ratio", sp.spec.overlap_ratio, "Overlap ratio in [0,1]")->capture_default_str();
    cmd_split->add_option("--seed", sp.spec.seed)->capture_default_str();
    cmd_split->add_option("--out", sp.out, "Output CSV (subset,id)")->required();
    cmd_split->callback([&] {
        action = [&] {
            std::vector<std::string> ids;
            if (!sp.ids.empty()) {
                ids = read_id_list(sp.ids);
            } else if (!sp.ids_dir.empty()) {
                for (const auto& e : fs::directory_iterator(sp.ids_dir)) {
                    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
                }
                std::sort(ids.begin(), ids.end());
            } else {
                throw InvalidArgument("split needs --ids or --ids-dir");
            }
            const auto split = io::split_dataset(ids, sp.spec);
            std::string text = "subset,id\n";
            for (const auto& id : split.a) text += "a," + id + "\n";
            for (const auto& id : split.b) text += "b," + id + "\n";
            io::atomic_write(sp.out, text);
        };
    });

    // tile -----------------------------------------------------------------
    struct {
        std::string size, in, out_dir;
        int patch = 224;
        int overlap = 80;
    } tl;
    auto* cmd_tile = app.add_subcommand("tile", "List patch origins, optionally cutting a PFG1/PNG file");
    auto* tsize = cmd_tile->add_option("--size", tl.size, "Image size WxH");
    auto* tin = cmd_tile->add_option("--in", tl.in, "Image (PNG) or probability map (PFG1) to cut");
    tsize->excludes(tin);
    cmd_tile->add_option("--patch", tl.patch)->capture_default_str();
    cmd_tile->add_option("--overlap", tl.overlap)->capture_default_str();
    cmd_tile->add_option("--out-dir", tl.out_dir, "Write patches <stem>_<x>_<y>.<ext> here");
    cmd_tile->callback([&] {
        action = [&] {
            const bool is_pfg = !tl.in.empty() && fs::path(tl.in).extension() == ".pfg";
            std::optional<ProbMap> map;
            std::optional<io::RawImage> raw;
            Dims dims;
            if (!tl.size.empty()) {
                dims = parse_size(tl.size);
            } else if (is_pfg) {
                map = read_valid_probmap(tl.in);
                dims = map->dims();
            } else if (!tl.in.empty()) {
                raw = io::decode_png(io::read_bytes(tl.in));
                dims = raw->dims;
            } else {
                throw InvalidArgument("tile needs --size or --in");
            }
            const auto grid = io::tile(dims, tl.patch, tl.overlap);
            const Dims patch{tl.patch, tl.patch};
            if (!tl.out_dir.empty()) {
                if (tl.in.empty()) throw InvalidArgument("--out-dir requires --in");
                fs::create_directories(tl.out_dir);
            }
            const std::string stem = tl.in.empty() ? "" : fs::path(tl.in).stem().string();
            for (const auto& o : grid.origins) {
                std::cout << o.x << ',' << o.y << '\n';
                if (tl.out_dir.empty()) continue;
                const std::string base = stem + "_" + std::to_string(o.x) + "_" + std::to_string(o.y);
                if (map) io::write_probmap(io::crop(*map, o, patch), fs::path(tl.out_dir) / (base + ".pfg"));
                else io::atomic_write(fs::path(tl.out_dir) / (base + ".png"), io::encode_png(io::crop(*raw, o, patch)));
            }
        };
    });

    // stitch ---------------------------------------------------------------
    struct {
        std::string size, out;
        std::vector<std::string> patches;
    } st;
    auto* cmd_stitch = app.add_subcommand("stitch", "Average overlapping patch predictions into one map");
    cmd_stitch->add_option("--size", st.size, "Output size WxH")->required();
    cmd_stitch->add_option("--out", st.out, "Output PFG1")->required();
    cmd_stitch->add_option("patches", st.patches, "Patch files named *_<x>_<y>.pfg")->required();
    cmd_stitch->callback([&] {
        action = [&] {
            std::vector<io::Patch> patches;
            for (const auto& p : st.patches) patches.push_back(read_patch(p));
            io::write_probmap(io::stitch(patches, parse_size(st.size)), st.out);
        };
    });

    // pipeline -------------------------------------------------------------
    struct {
        std::string config, images, points, out, preds, gt;
    } pl;
    auto* cmd_pipe = app.add_subcommand("pipeline", "Generate H components and coarse labels for a directory");
    cmd_pipe->add_option("--config", pl.config, "key = value config file (defaults if omitted)");
    cmd_pipe->add_option("--images", pl.images, "Directory of <stem>.png")->required();
    cmd_pipe->add_option("--points", pl.points, "Directory of <stem>.csv")->required();
    cmd_pipe->add_option("--out", pl.out, "Output directory")->required();
    cmd_pipe->add_option("--preds", pl.preds, "Directory of averaged predictions <stem>.pfg");
    cmd_pipe->add_option("--gt", pl.gt, "Directory of instance maps <stem>.png (needs --preds)");
    cmd_pipe->callback([&] {
        action = [&] {
            pipeline::PipelineConfig cfg = pl.config.empty() ? pipeline::PipelineConfig{} : pipeline::read_config(pl.config);
            if (const char* env = std::getenv("POINTPROP_SEED"); env != nullptr && *env != '\0') {
                try {
                    cfg.seed = std::stoull(env);
                } catch (const std::exception&) {
                    throw InvalidArgument("POINTPROP_SEED must be an unsigned integer");
                }
            }
            pipeline::PipelineInputs inputs{pl.images, pl.points, pl.out, std::nullopt, std::nullopt};
            if (!pl.preds.empty()) inputs.pred_dir = pl.preds;
            if (!pl.gt.empty()) inputs.gt_dir = pl.gt;
            const auto result = pipeline::run_pipeline(cfg, inputs);
            std::cout << "images=" << result.images << " manifest=" << result.manifest_path.string()
                      << " sha256=" << result.manifest_hash << '\n';
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "pointprop: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
