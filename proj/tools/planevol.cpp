#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "planevol/checks.hpp"
#include "planevol/cli.hpp"

namespace {

enum Exit { ok = 0, usage = 1, config = 2, divergence = 3, suite_failure = 4 };

}  // namespace

int main(int argc, char** argv) {
    using namespace planevol;
    CLI::App app{"planevol: single-view novel view synthesis on synthetic layered scenes"};
    app.require_subcommand(1);

    std::string config_path;
    auto* synth = app.add_subcommand("synth", "write oracle renders, teacher maps and points for a config");
    synth->add_option("-c,--config", config_path, "run config (YAML)")->required();

    bool resume = false;
    bool quiet = false;
    std::int64_t stop_after = -1;
    auto* train = app.add_subcommand("train", "two-stage training; writes checkpoint.pvck and train.log");
    train->add_option("-c,--config", config_path, "run config (YAML)")->required();
    train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
    train->add_option("--stop-after", stop_after, "stop after this many total steps");
    train->add_flag("-q,--quiet", quiet, "do not echo the per-step log");

    std::string checkpoint;
    std::string view = "holdout:0";
    std::string branch = "joint";
    std::string out;
    auto* render = app.add_subcommand("render", "render one branch of a checkpoint to PNG + PFM");
    render->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    render->add_option("--view", view, "source, target:N or holdout:N")->capture_default_str();
    render->add_option("--branch", branch, "coarse, fine or joint")
        ->check(CLI::IsMember({"coarse", "fine", "joint"}))
        ->capture_default_str();
    render->add_option("-o,--out", out, "output prefix (default: <checkpoint dir>/render_<view>_<branch>)");

    auto* eval = app.add_subcommand("eval", "score every branch on held-out views against the oracle");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("-o,--out", out, "summary JSON (default: <checkpoint dir>/metrics.json)");

    std::string fault = "none";
    auto* check = app.add_subcommand("check", "run the invariant suites");
    check->add_option("--inject-fault", fault, "corrupt the pipeline on purpose")
        ->check(CLI::IsMember({"none", "sigma-sign"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::usage;
    }

    try {
        if (*synth) {
            const RunConfig cfg = load_config(config_path);
            for (const auto& f : cmd_synth(cfg)) std::cout << f.string() << '\n';
        } else if (*train) {
            const RunConfig cfg = load_config(config_path);
            TrainOptions opt;
            opt.resume = resume;
            opt.stop_after = stop_after;
            if (!quiet) opt.progress = &std::cout;
            const TrainSummary s = cmd_train(cfg, opt);
            std::cout << "trained " << s.steps << " steps, checkpoint " << s.checkpoint.string() << '\n';
        } else if (*render) {
            const LoadedRun run = load_run(checkpoint);
            const Camera cam = select_camera(run.config, view);
            std::string prefix = out;
            if (prefix.empty()) {
                std::string tag = view;
                for (char& c : tag) c = c == ':' ? '_' : c;
                prefix = (std::filesystem::path(checkpoint).parent_path() / ("render_" + tag + "_" + branch)).string();
            }
            cmd_render(run, cam, branch_from_string(branch), prefix);
            std::cout << prefix << ".png\n" << prefix << ".pfm\n";
        } else if (*eval) {
            const LoadedRun run = load_run(checkpoint);
            const std::string path =
                out.empty() ? (std::filesystem::path(checkpoint).parent_path() / "metrics.json").string() : out;
            for (const BranchEval& e : cmd_eval(run, path)) {
                std::printf("%-6s psnr %7.3f  ssim %.4f  rel %.4f  log10 %.4f  rms %.4f  d1 %.3f  d2 %.3f  d3 %.3f\n",
                            to_string(e.branch), e.mean.psnr, e.mean.ssim, e.mean.depth.rel, e.mean.depth.log10,
                            e.mean.depth.rms, e.mean.depth.delta1, e.mean.depth.delta2, e.mean.depth.delta3);
            }
            std::cout << path << '\n';
        } else if (*check) {
            bool all = true;
            for (const SuiteResult& r : run_all_checks(fault_from_string(fault))) {
                std::printf("%s  %-34s [%s] %s (%.2fs)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                            r.tolerance.c_str(), r.detail.c_str(), r.seconds);
                all = all && r.passed;
            }
            return all ? Exit::ok : Exit::suite_failure;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Exit::config;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return Exit::divergence;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return Exit::divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::usage;
    }
    return Exit::ok;
}
