#include <doctest.h>

#include <json.hpp>

#include "pointprop/dataio.hpp"
#include "pointprop/pipeline.hpp"
#include "run.hpp"
#include "synthetic.hpp"

using namespace pointprop;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(POINTPROP_FIXTURES) / "pipeline";

pipeline::PipelineInputs fixture_inputs(const fs::path& out) {
    return {kFixture / "images", kFixture / "points", out, std::nullopt, std::nullopt};
}

}  // namespace

TEST_CASE("config text round trip") {
    pipeline::PipelineConfig cfg;
    cfg.seed = 12345678901234ull;
    cfg.cluster.dist_weight = 0.1 + 0.2;
    cfg.stain.tol = 1e-9;
    cfg.schedule.n_max = 150;
    cfg.ema_period = 4;
    const auto text = pipeline::format_config(cfg);
    const auto back = pipeline::parse_config(text);
    CHECK(pipeline::format_config(back) == text);
    CHECK(back.seed == cfg.seed);
    CHECK(back.cluster.dist_weight == cfg.cluster.dist_weight);
    CHECK(back.stain.tol == cfg.stain.tol);
}

TEST_CASE("config parsing") {
    const auto cfg = pipeline::parse_config("# comment\n\nseed = 7\ncluster.min_area=12  # trailing\nschedule.n_max = 60\n");
    CHECK(cfg.seed == 7);
    CHECK(cfg.cluster.min_area == 12);
    CHECK(cfg.schedule.n_max == 60);
    CHECK(cfg.schedule.eta == 1.0);
    CHECK(cfg.schedule.epsilon == 0.1);

    try {
        pipeline::parse_config("seed = 1\nbogus.key = 3\n");
        FAIL("unknown key accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(pipeline::parse_config("seed = 1\nseed = 2\n"), ParseError);
    CHECK_THROWS_AS(pipeline::parse_config("seed = -1\n"), ParseError);
    CHECK_THROWS_AS(pipeline::parse_config("cluster.k = 3.5\n"), ParseError);
    CHECK_THROWS_AS(pipeline::parse_config("stain.tol\n"), ParseError);
    CHECK_THROWS_AS(pipeline::parse_config("cluster.k = 4\n"), InvalidArgument);
    CHECK_THROWS_AS(pipeline::parse_config("ema.decay = 0\n"), InvalidArgument);
    CHECK_THROWS_AS(pipeline::parse_config("schedule.n_max = 0.5\n"), InvalidArgument);
}

TEST_CASE("sha256") {
    CHECK(pipeline::sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(pipeline::sha256_hex(std::string()) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("pipeline on the bundled fixture") {
    const auto out = testkit::fresh_dir("pipe_a");
    const auto result = pipeline::run_pipeline({}, fixture_inputs(out));
    CHECK(result.images == 2);
    for (const char* stem : {"tile_a", "tile_b"}) {
        for (const char* suffix : {".h.png", ".vor.png", ".clu.png"}) CHECK(fs::exists(out / (std::string(stem) + suffix)));
        const auto vor = io::read_trilabel(out / (std::string(stem) + ".vor.png"));
        const auto clu = io::read_trilabel(out / (std::string(stem) + ".clu.png"));
        const auto pts = io::read_points(kFixture / "points" / (std::string(stem) + ".csv"));
        for (const auto& p : pts) {
            CHECK(vor.at(p.x, p.y) == label::kNucleus);
            CHECK(clu.at(p.x, p.y) == label::kNucleus);
        }
        CHECK_FALSE(validate(io::read_gray(out / (std::string(stem) + ".h.png"))).has_value());
    }
    const auto manifest = nlohmann::json::parse(testkit::slurp(result.manifest_path));
    CHECK(manifest["items"].size() == 2);
    CHECK(manifest["seed"] == 0);
    CHECK(manifest["config_hash"] == pipeline::sha256_hex(pipeline::format_config({})));
    CHECK(manifest["items"][0]["stem"] == "tile_a");
    CHECK(manifest["items"][0]["outputs"].size() == 3);
    CHECK(result.manifest_hash == pipeline::sha256_hex(testkit::slurp(result.manifest_path)));

    SUBCASE("rerun is byte identical") {
        const auto again_dir = testkit::fresh_dir("pipe_b");
        const auto again = pipeline::run_pipeline({}, fixture_inputs(again_dir));
        CHECK(again.manifest_hash == result.manifest_hash);
        for (const auto& e : fs::directory_iterator(out))
            CHECK(testkit::slurp(e.path()) == testkit::slurp(again_dir / e.path().filename()));
    }
    SUBCASE("worker count does not change the artifacts") {
        pipeline::PipelineConfig cfg;
        cfg.workers = 2;
        const auto par_dir = testkit::fresh_dir("pipe_par");
        pipeline::run_pipeline(cfg, fixture_inputs(par_dir));
        const auto a = nlohmann::json::parse(testkit::slurp(result.manifest_path));
        const auto b = nlohmann::json::parse(testkit::slurp(par_dir / "manifest.json"));
        CHECK(a["items"] == b["items"]);
    }
    SUBCASE("a different seed changes the manifest") {
        pipeline::PipelineConfig cfg;
        cfg.seed = 99;
        const auto other = pipeline::run_pipeline(cfg, fixture_inputs(testkit::fresh_dir("pipe_seed")));
        CHECK(other.manifest_hash != result.manifest_hash);
    }
}

TEST_CASE("pipeline with predictions and ground truth") {
    const auto preds = testkit::fresh_dir("pipe_preds");
    for (const char* stem : {"tile_a", "tile_b"}) {
        const auto gt = io::read_instances(kFixture / "gt" / (std::string(stem) + ".png"));
        std::vector<double> p(gt.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = gt[i] ? 0.8 : 0.2;
        io::write_probmap(ProbMap(gt.dims(), p), preds / (std::string(stem) + ".pfg"));
    }
    auto inputs = fixture_inputs(testkit::fresh_dir("pipe_full"));
    inputs.pred_dir = preds;
    inputs.gt_dir = kFixture / "gt";
    const auto result = pipeline::run_pipeline({}, inputs);
    const auto manifest = nlohmann::json::parse(testkit::slurp(result.manifest_path));
    for (const auto& item : manifest["items"]) {
        CHECK(item["outputs"].size() == 4);
        CHECK(item["metrics"]["aji"].get<double>() == doctest::Approx(1.0));
    }
    const auto pseudo = io::read_probmap(inputs.out_dir / "tile_a.pseudo.pfg");
    const auto clu = io::read_trilabel(inputs.out_dir / "tile_a.clu.png");
    for (std::size_t i = 0; i < pseudo.size(); ++i)
        if (clu[i] != label::kIgnored) CHECK(pseudo[i] == clu[i]);
}

TEST_CASE("pipeline input errors") {
    SUBCASE("empty directories give an empty manifest") {
        const auto root = testkit::fresh_dir("pipe_empty");
        fs::create_directories(root / "i");
        fs::create_directories(root / "p");
        const auto r = pipeline::run_pipeline({}, {root / "i", root / "p", root / "o", std::nullopt, std::nullopt});
        CHECK(r.images == 0);
        CHECK(nlohmann::json::parse(testkit::slurp(r.manifest_path))["items"].empty());
    }
    SUBCASE("image without points") {
        const auto root = testkit::fresh_dir("pipe_unpaired");
        fs::create_directories(root / "p");
        fs::copy(kFixture / "images", root / "i");
        fs::copy_file(kFixture / "points" / "tile_a.csv", root / "p" / "tile_a.csv");
        CHECK_THROWS_WITH(pipeline::run_pipeline({}, {root / "i", root / "p", root / "o", std::nullopt, std::nullopt}),
                          doctest::Contains("tile_b"));
    }
    SUBCASE("module errors carry the image name") {
        const auto root = testkit::fresh_dir("pipe_bad");
        fs::copy(kFixture / "images", root / "i");
        fs::copy(kFixture / "points", root / "p");
        io::atomic_write(root / "p" / "tile_b.csv", std::string("1,1\n1,1\n"));
        CHECK_THROWS_WITH(pipeline::run_pipeline({}, {root / "i", root / "p", root / "o", std::nullopt, std::nullopt}),
                          doctest::Contains("tile_b"));
    }
}
