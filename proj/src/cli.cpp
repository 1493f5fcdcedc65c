#include "planevol/cli.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "planevol/optimizer.hpp"
#include "planevol/pipeline.hpp"
#include "planevol/scene_oracle.hpp"

namespace planevol {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ordered_json camera_json(const Camera& c) {
    ordered_json j;
    std::vector<double> r;
    for (int i = 0; i < 9; ++i) r.push_back(c.rotation()(i / 3, i % 3));
    j["rotation"] = r;
    j["translation"] = {c.translation().x(), c.translation().y(), c.translation().z()};
    j["intrinsics"] = {c.fx(), c.fy(), c.cx(), c.cy()};
    j["size"] = {c.width(), c.height()};
    return j;
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path.string() + ": cannot open");
    out << j.dump(2) << '\n';
}

std::string view_name(std::size_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, v == 0 ? "view%02zu_source" : "view%02zu_target", v);
    return buf;
}

std::string format_log(const StepLog& log) {
    const LossReport& r = log.report;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "step %llu stage %d view %zu patch %d,%d lr %.6g objective %.17g coarse %.17g fine %.17g "
                  "joint %.17g total %.17g",
                  static_cast<unsigned long long>(log.step), log.stage, log.patch.view, log.patch.x0, log.patch.y0,
                  log.learning_rate, log.objective, r.has_coarse ? r.coarse.total : 0.0,
                  r.has_fine ? r.fine.total : 0.0, r.has_joint ? r.joint.total : 0.0, r.total);
    return buf;
}

void save(const RunConfig& config, const Model& model, const Trainer& trainer) {
    Checkpoint c;
    c.config_text = dump_config(config);
    c.config_hash = fnv1a(c.config_text);
    c.step = trainer.step();
    c.store = model.store();
    c.adam = trainer.adam();
    write_checkpoint(checkpoint_path(config), c);
}

ordered_json metrics_json(const Metrics& m) {
    ordered_json j;
    j["psnr"] = m.psnr;
    j["ssim"] = m.ssim;
    j["rel"] = m.depth.rel;
    j["log10"] = m.depth.log10;
    j["rms"] = m.depth.rms;
    j["delta1"] = m.depth.delta1;
    j["delta2"] = m.depth.delta2;
    j["delta3"] = m.depth.delta3;
    return j;
}

}  // namespace

fs::path checkpoint_path(const RunConfig& config) { return config.output_dir() / "checkpoint.pvck"; }

std::vector<fs::path> cmd_synth(const RunConfig& config) {
    const fs::path dir = config.output_dir() / "synth";
    fs::create_directories(dir);
    const LayeredScene scene = scene_preset(config.preset, config.width, config.height);
    const TrainingData data = build_training_data(scene, config.source, config.targets, config.data, config.seed);

    std::vector<fs::path> files;
    ordered_json manifest;
    manifest["config_hash"] = hash_hex(config_hash(config));
    manifest["preset"] = config.preset;
    manifest["seed"] = config.seed;
    ordered_json views = ordered_json::array();
    for (std::size_t v = 0; v < data.views.size(); ++v) {
        const std::string name = view_name(v);
        const fs::path png = dir / (name + ".png");
        const fs::path pfm = dir / (name + "_teacher.pfm");
        write_png(png, data.views[v].rgb);
        write_pfm(pfm, data.views[v].teacher);
        files.push_back(png);
        files.push_back(pfm);
        ordered_json jv;
        jv["name"] = name;
        jv["camera"] = camera_json(data.views[v].camera);
        jv["image"] = png.filename().string();
        jv["teacher_disparity"] = pfm.filename().string();
        views.push_back(jv);
    }
    manifest["views"] = views;

    std::vector<Vec3> world;
    for (const SparsePoint& p : data.views[0].points) world.push_back(point_to_world(config.source, config.source, p));
    const fs::path ply = dir / "points.ply";
    write_ply(ply, world);
    files.push_back(ply);
    manifest["points"] = ply.filename().string();

    const fs::path mf = dir / "manifest.json";
    write_json(mf, manifest);
    files.push_back(mf);
    return files;
}

TrainSummary cmd_train(const RunConfig& config, const TrainOptions& options) {
    const fs::path dir = config.output_dir();
    fs::create_directories(dir);
    const std::string text = dump_config(config);
    const std::uint64_t hash = fnv1a(text);

    const LayeredScene scene = scene_preset(config.preset, config.width, config.height);
    const TrainingData data = build_training_data(scene, config.source, config.targets, config.data, config.seed);
    Model model(config.model);
    model.initialize(config.seed);
    Trainer trainer(model, data, config.train, config.loss, config.seed);

    const fs::path log_path = dir / "train.log";
    std::ofstream log;
    if (options.resume) {
        const Checkpoint c = read_checkpoint(checkpoint_path(config));
        if (c.config_hash != hash) throw ConfigError("checkpoint was written by a different config");
        load_parameters(model, c.store);
        trainer.restore(c.step, c.adam);
        log.open(log_path, std::ios::app);
    } else {
        log.open(log_path, std::ios::trunc);
        log << "# config " << hash_hex(hash) << '\n';
        std::ofstream(dir / "config.yaml") << text;
    }
    if (!log) throw std::runtime_error(log_path.string() + ": cannot open");

    TrainSummary summary;
    summary.checkpoint = checkpoint_path(config);
    const auto every = static_cast<std::uint64_t>(config.train.checkpoint_every);
    while (!trainer.done()) {
        if (options.stop_after >= 0 && trainer.step() >= static_cast<std::uint64_t>(options.stop_after)) break;
        StepLog step;
        try {
            step = trainer.run_step();
        } catch (const DivergenceError& e) {
            log << "# diverged: " << e.what() << '\n';
            log.flush();
            save(config, model, trainer);
            throw;
        }
        const std::string line = format_log(step);
        log << line << '\n';
        if (options.progress) *options.progress << line << '\n';
        summary.last_objective = step.objective;
        if (every > 0 && trainer.step() % every == 0) save(config, model, trainer);
    }
    log.flush();
    save(config, model, trainer);
    summary.steps = trainer.step();
    return summary;
}

LoadedRun load_run(const fs::path& checkpoint) {
    const Checkpoint c = read_checkpoint(checkpoint);
    LoadedRun run;
    const fs::path parent = checkpoint.parent_path();
    run.config = parse_config(c.config_text, parent.empty() ? fs::path(".") : parent);
    run.model = std::make_unique<Model>(run.config.model);
    load_parameters(*run.model, c.store);
    const LayeredScene scene = scene_preset(run.config.preset, run.config.width, run.config.height);
    run.source_image = oracle_render(scene, run.config.source, run.config.source).rgb;
    return run;
}

Camera select_camera(const RunConfig& config, const std::string& which) {
    if (which == "source") return config.source;
    const auto colon = which.find(':');
    const std::string kind = which.substr(0, colon);
    if (colon != std::string::npos && (kind == "target" || kind == "holdout")) {
        const auto& list = kind == "target" ? config.targets : config.holdout;
        std::size_t pos = 0;
        long idx = -1;
        try {
            idx = std::stol(which.substr(colon + 1), &pos);
        } catch (const std::exception&) {
        }
        if (pos == which.size() - colon - 1 && idx >= 0 && static_cast<std::size_t>(idx) < list.size()) {
            return list[static_cast<std::size_t>(idx)];
        }
        throw ConfigError("view '" + which + "': index out of range (" + std::to_string(list.size()) + " " + kind +
                          " views)");
    }
    throw ConfigError("view '" + which + "': expected source, target:N or holdout:N");
}

RenderedView cmd_render(const LoadedRun& run, const Camera& camera, Branch branch, const fs::path& out_prefix) {
    RenderOptions opt;
    opt.seed = run.config.seed;
    RenderedView view = render_view(*run.model, run.source_image, run.config.source, camera, branch, opt);
    if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
    write_png(out_prefix.string() + ".png", view.rgb);
    write_pfm(out_prefix.string() + ".pfm", view.depth);
    ordered_json j;
    j["config_hash"] = hash_hex(config_hash(run.config));
    j["branch"] = to_string(branch);
    j["camera"] = camera_json(camera);
    write_json(out_prefix.string() + ".json", j);
    return view;
}

std::vector<BranchEval> cmd_eval(const LoadedRun& run, const fs::path& out) {
    const RunConfig& cfg = run.config;
    const LayeredScene scene = scene_preset(cfg.preset, cfg.width, cfg.height);
    const auto& cams = cfg.holdout.empty() ? cfg.targets : cfg.holdout;
    if (cams.empty()) throw ConfigError("eval: the config has no holdout or target views");
    const Branch all[] = {Branch::coarse, Branch::fine, Branch::joint};

    std::vector<BranchEval> result;
    for (Branch b : all) result.push_back({b, {}, {}});
    RenderOptions opt;
    opt.seed = cfg.seed;
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const OracleView truth = oracle_render(scene, cfg.source, cams[v]);
        opt.view_tag = v;
        const auto views = render_branches(*run.model, run.source_image, cfg.source, cams[v], all, opt);
        for (std::size_t k = 0; k < views.size(); ++k) {
            result[k].per_view.push_back(metrics(views[k].rgb, truth.rgb, views[k].depth, truth.depth));
        }
    }

    ordered_json j;
    j["config_hash"] = hash_hex(config_hash(cfg));
    j["views"] = cfg.holdout.empty() ? "targets" : "holdout";
    for (BranchEval& e : result) {
        Metrics& m = e.mean;
        for (const Metrics& x : e.per_view) {
            m.psnr += x.psnr;
            m.ssim += x.ssim;
            m.depth.rel += x.depth.rel;
            m.depth.log10 += x.depth.log10;
            m.depth.rms += x.depth.rms;
            m.depth.delta1 += x.depth.delta1;
            m.depth.delta2 += x.depth.delta2;
            m.depth.delta3 += x.depth.delta3;
        }
        const double n = static_cast<double>(e.per_view.size());
        m.psnr /= n;
        m.ssim /= n;
        m.depth.rel /= n;
        m.depth.log10 /= n;
        m.depth.rms /= n;
        m.depth.delta1 /= n;
        m.depth.delta2 /= n;
        m.depth.delta3 /= n;
        ordered_json jb;
        jb["mean"] = metrics_json(m);
        ordered_json pv = ordered_json::array();
        for (const Metrics& x : e.per_view) pv.push_back(metrics_json(x));
        jb["per_view"] = pv;
        j["branches"][to_string(e.branch)] = jb;
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, j);
    return result;
}

}  // namespace planevol
