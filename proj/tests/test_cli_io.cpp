#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "planevol/cli.hpp"
#include "planevol/io.hpp"
#include "planevol/rng.hpp"
#include "planevol/scene_oracle.hpp"
#include "support.hpp"

using namespace planevol;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("planevol_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kSmall = R"(scene: {preset: three-planes, width: 16, height: 16}
model: {planes: 8, fine_samples: 4, extractor_hidden: 4}
train: {stage1_steps: 6, stage2_steps: 6, patch: 12, checkpoint_every: 4}
data: {points_per_view: 8}
seed: 11
output: run
)";

RunConfig small_config(const fs::path& dir) { return parse_config(kSmall, dir); }

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("cli_io") {
    TEST_CASE("png round trip within one quantum") {
        const fs::path dir = scratch("png");
        Image img(7, 5, 3);
        CounterRng rng(1);
        for (double& v : img.data()) v = rng.uniform();
        write_png(dir / "a.png", img);
        const Image back = read_png(dir / "a.png");
        REQUIRE(back.width() == 7);
        REQUIRE(back.channels() == 3);
        for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-12);
    }

    TEST_CASE("pfm and ply are lossless") {
        const fs::path dir = scratch("pfm");
        Image img(6, 4, 1);
        CounterRng rng(2);
        // Values representable in single precision.
        for (double& v : img.data()) v = static_cast<float>(1 + 3 * rng.uniform());
        write_pfm(dir / "d.pfm", img);
        CHECK(read_pfm(dir / "d.pfm") == img);

        std::vector<Vec3> pts{{0.1, -2.0, 3.0 / 7.0}, {1e-9, 5.5, -1.0 / 3.0}};
        write_ply(dir / "p.ply", pts);
        const auto back = read_ply(dir / "p.ply");
        REQUIRE(back.size() == 2);
        CHECK(back[0] == pts[0]);
        CHECK(back[1] == pts[1]);
    }

    TEST_CASE("config round trip and hash") {
        const RunConfig a = parse_config(kSmall);
        const std::string dumped = dump_config(a);
        const RunConfig b = parse_config(dumped);
        CHECK(dump_config(b) == dumped);
        CHECK(config_hash(a) == config_hash(b));
        RunConfig c = a;
        c.seed = 12;
        CHECK(config_hash(c) != config_hash(a));
        CHECK(hash_hex(0xabcULL) == "0000000000000abc");
        CHECK(a.model.width == 16);
        CHECK(a.targets.size() == 8);
    }

    TEST_CASE("config errors name the field") {
        const std::string unknown = config_error("scene: {preset: three-planes}\nmodel:\n  planes: 8\n  layers: 3\n");
        CHECK(unknown.find("model.layers") != std::string::npos);
        CHECK(unknown.find("line 4") != std::string::npos);
        CHECK(config_error("scene: {preset: four-planes}\n").find("scene.preset") != std::string::npos);
        CHECK(config_error("train: {patch: abc}\n").find("train.patch") != std::string::npos);
        CHECK(config_error("scene: {width: 8, height: 8}\n").find("scene.width") != std::string::npos);
        CHECK(config_error("train: {patch: 64}\n").find("train.patch") != std::string::npos);
        CHECK(config_error("model: {mode: sparse}\n").find("model.mode") != std::string::npos);
        CHECK(config_error("seed: 3\n").empty());
    }

    TEST_CASE("synth writes every view and is reproducible") {
        const fs::path dir = scratch("synth");
        RunConfig cfg = small_config(dir);
        cfg.targets.erase(cfg.targets.begin() + 2, cfg.targets.end());
        const auto files = cmd_synth(cfg);
        int png = 0, pfm = 0, ply = 0, json = 0;
        for (const auto& f : files) {
            const auto ext = f.extension().string();
            png += ext == ".png";
            pfm += ext == ".pfm";
            ply += ext == ".ply";
            json += ext == ".json";
        }
        CHECK(png == 3);
        CHECK(pfm == 3);
        CHECK(ply == 1);
        CHECK(json == 1);
        std::vector<std::string> first;
        for (const auto& f : files) first.push_back(slurp(f));
        cmd_synth(cfg);
        for (std::size_t i = 0; i < files.size(); ++i) CHECK(slurp(files[i]) == first[i]);

        const auto manifest = nlohmann::json::parse(slurp(dir / "run" / "synth" / "manifest.json"));
        CHECK(manifest["views"].size() == 3);
        CHECK(manifest["config_hash"] == hash_hex(config_hash(cfg)));
    }

    TEST_CASE("checkpoint round trip") {
        const fs::path dir = scratch("ckpt");
        const RunConfig cfg = small_config(dir);
        Model model(cfg.model);
        model.initialize(4);
        Checkpoint c;
        c.config_text = dump_config(cfg);
        c.config_hash = config_hash(cfg);
        c.step = 17;
        c.store = model.store();
        c.adam = AdamState(model.store());
        write_checkpoint(dir / "c.pvck", c);
        const Checkpoint back = read_checkpoint(dir / "c.pvck");
        CHECK(back.config_text == c.config_text);
        CHECK(back.config_hash == c.config_hash);
        CHECK(back.step == 17);
        CHECK(back.store == c.store);
        CHECK(back.adam == c.adam);

        std::string bytes = slurp(dir / "c.pvck");
        bytes[0] = 'X';
        std::ofstream(dir / "bad.pvck", std::ios::binary) << bytes;
        CHECK_THROWS_AS(read_checkpoint(dir / "bad.pvck"), ConfigError);

        RunConfig other = cfg;
        other.model.planes = 9;
        Model wrong(other.model);
        CHECK_THROWS_AS(load_parameters(wrong, c.store), ConfigError);
    }

    TEST_CASE("resumed training matches an uninterrupted run") {
        const fs::path a = scratch("resume_a");
        const fs::path b = scratch("resume_b");
        cmd_train(small_config(a));
        TrainOptions stop;
        stop.stop_after = 5;
        cmd_train(small_config(b), stop);
        CHECK(read_checkpoint(b / "run" / "checkpoint.pvck").step == 5);
        TrainOptions resume;
        resume.resume = true;
        cmd_train(small_config(b), resume);
        CHECK(slurp(a / "run" / "checkpoint.pvck") == slurp(b / "run" / "checkpoint.pvck"));
        CHECK(slurp(a / "run" / "train.log") == slurp(b / "run" / "train.log"));
    }

    TEST_CASE("render output matches the in-memory render") {
        const fs::path dir = scratch("render");
        const RunConfig cfg = small_config(dir);
        TrainOptions opt;
        opt.stop_after = 2;
        cmd_train(cfg, opt);
        const LoadedRun run = load_run(dir / "run" / "checkpoint.pvck");
        const Camera cam = select_camera(run.config, "holdout:1");
        const RenderedView v = cmd_render(run, cam, Branch::joint, dir / "out");
        RenderOptions ro;
        ro.seed = run.config.seed;
        const RenderedView direct = render_view(*run.model, run.source_image, run.config.source, cam, Branch::joint, ro);
        CHECK(v.rgb == direct.rgb);
        CHECK(v.depth == direct.depth);
        CHECK(fs::exists(dir / "out.png"));
        CHECK(fs::exists(dir / "out.json"));
        const Image depth = read_pfm(dir / "out.pfm");
        for (std::size_t i = 0; i < depth.size(); ++i) {
            CHECK(depth.data()[i] == static_cast<double>(static_cast<float>(direct.depth.data()[i])));
        }
    }

    TEST_CASE("camera selection") {
        const RunConfig cfg = small_config(".");
        CHECK(select_camera(cfg, "source").center() == cfg.source.center());
        CHECK(select_camera(cfg, "target:7").center() == cfg.targets[7].center());
        CHECK_THROWS_AS(select_camera(cfg, "target:8"), ConfigError);
        CHECK_THROWS_AS(select_camera(cfg, "holdout:x"), ConfigError);
        CHECK_THROWS_AS(select_camera(cfg, "left"), ConfigError);
    }

    TEST_CASE("eval of an exact coarse model") {
        const fs::path dir = scratch("eval");
        RunConfig cfg = parse_config("scene: {preset: checker-stack, width: 24, height: 24}\n"
                                     "model: {fine_samples: 4, extractor_hidden: 4}\n"
                                     "train: {patch: 12}\n",
                                     dir);
        LoadedRun run;
        run.config = cfg;
        run.model = std::make_unique<Model>(cfg.model);
        run.model->initialize(1);
        const LayeredScene scene = scene_preset(cfg.preset, cfg.width, cfg.height);
        testing::load_direct_mpi(*run.model, exact_mpi(scene, run.model->depths()));
        run.source_image = oracle_render(scene, cfg.source, cfg.source).rgb;
        const auto result = cmd_eval(run, dir / "metrics.json");
        REQUIRE(result.size() == 3);
        CHECK(result[0].branch == Branch::coarse);
        CHECK(result[0].mean.ssim > 0.999999);
        CHECK(result[0].mean.psnr > 80.0);
        const auto j = nlohmann::json::parse(slurp(dir / "metrics.json"));
        for (const char* key : {"psnr", "ssim", "rel", "log10", "rms", "delta1", "delta2", "delta3"}) {
            CHECK(j["branches"]["joint"]["mean"].contains(key));
        }
        CHECK(j["views"] == "holdout");
        CHECK(j["branches"]["coarse"]["per_view"].size() == 2);
    }
}
