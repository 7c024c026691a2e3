// Command-line front end: data generation, training, evaluation and the
// exact-embedding demo, all driven by a declarative config or a preset.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "koopid/experiment.hpp"

namespace {

koopid::ExperimentConfig resolve_config(const std::string& preset_name,
                                        const std::string& config_path) {
    if (!preset_name.empty() && !config_path.empty())
        koopid::fail(koopid::ErrorCode::Usage, "give either --preset or --config, not both");
    if (!preset_name.empty()) return koopid::preset(preset_name);
    if (!config_path.empty()) return koopid::load_config(config_path);
    koopid::fail(koopid::ErrorCode::Usage, "need --preset NAME or --config PATH");
}

std::optional<koopid::IndexRange> parse_mask(const std::string& mask) {
    if (mask.empty()) return std::nullopt;
    const auto colon = mask.find(':');
    if (colon == std::string::npos)
        koopid::fail(koopid::ErrorCode::Usage, "--mask expects START:END");
    try {
        koopid::IndexRange r;
        r.begin = std::stoull(mask.substr(0, colon));
        r.end = std::stoull(mask.substr(colon + 1));
        if (r.end <= r.begin)
            koopid::fail(koopid::ErrorCode::Usage, "--mask range is empty");
        return r;
    } catch (const koopid::Error&) {
        throw;
    } catch (const std::exception&) {
        koopid::fail(koopid::ErrorCode::Usage, "--mask expects numeric START:END");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman state-space encoder identification"};
    app.require_subcommand(1);

    std::string preset_name, config_path, out_dir, data_dir, resume_path, mask, role = "test";
    std::string model_path;
    std::uint64_t seed = 0;
    bool seed_set = false, dump_config = false;
    long long epochs = -1;
    std::size_t workers = 0;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--preset", preset_name, "built-in experiment (vdp, vdp-desk, silverbox-synthetic)");
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--seed", seed, "override the experiment seed")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_flag("--dump-config", dump_config, "print the effective config and exit");
    };

    CLI::App* gen = app.add_subcommand("generate", "generate benchmark data sets");
    add_config_flags(gen);
    gen->add_option("--out", out_dir, "dataset directory to write");

    CLI::App* trn = app.add_subcommand("train", "train a model on a generated data set");
    add_config_flags(trn);
    trn->add_option("--data", data_dir, "dataset directory (defaults to the config's)");
    trn->add_option("--out", out_dir, "output directory for model/report/log");
    trn->add_option("--epochs", epochs, "override the epoch budget");
    trn->add_option("--workers", workers, "parallel workers for batch gradients");
    trn->add_option("--resume", resume_path, "warm-start from a saved model file");

    CLI::App* evl = app.add_subcommand("eval", "evaluate a saved model on a data set");
    evl->add_option("--model", model_path, "model JSON file")->required();
    evl->add_option("--data", data_dir, "dataset directory")->required();
    evl->add_option("--role", role, "train | validation | test | arrowhead");
    evl->add_option("--mask", mask, "only score samples in START:END");
    evl->add_option("--out", out_dir, "output directory for report and CSVs");

    CLI::App* demo = app.add_subcommand("demo-embedding",
                                        "polynomial system vs its exact lifted linear form");
    double da = 0.5, db = 0.3, dc = 1.0, dx1 = 2.0, dx2 = 1.0, dpsi = 1.0;
    std::size_t dsteps = 12;
    demo->add_option("--a", da);
    demo->add_option("--b", db);
    demo->add_option("--c", dc);
    demo->add_option("--x1", dx1, "initial x1");
    demo->add_option("--x2", dx2, "initial x2");
    demo->add_option("--steps", dsteps);
    demo->add_option("--psi", dpsi, "constraint violation of the off-manifold start");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            koopid::ExperimentConfig cfg = resolve_config(preset_name, config_path);
            if (seed_set) cfg.seed = seed;
            if (!out_dir.empty()) cfg.data_dir = out_dir;
            if (dump_config) {
                std::cout << koopid::config_to_json(cfg).dump(2) << '\n';
                return 0;
            }
            const auto res = koopid::cmd_generate(cfg);
            std::cout << "wrote " << res.n_trajectories << " trajectories to " << res.dir << '\n';
        } else if (trn->parsed()) {
            koopid::ExperimentConfig cfg = resolve_config(preset_name, config_path);
            if (seed_set) cfg.seed = seed;
            if (!data_dir.empty()) {
                cfg.data.source = "dir";
                cfg.data.dir = data_dir;
            } else if (cfg.data.source != "dir" && cfg.data.source != "csv") {
                cfg.data.source = "dir";
                cfg.data.dir = cfg.data_dir;  // read what `generate` wrote
            }
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(epochs);
            if (workers > 0) cfg.train.workers = workers;
            if (dump_config) {
                std::cout << koopid::config_to_json(cfg).dump(2) << '\n';
                return 0;
            }
            const auto res = koopid::cmd_train(cfg, resume_path);
            std::cout << "best epoch " << res.report.best_epoch << " (validation NRMS "
                      << res.report.best_val_nrms << "), model saved to " << res.model_path
                      << '\n';
        } else if (evl->parsed()) {
            koopid::EvalOptions opt;
            opt.role = role;
            opt.mask = parse_mask(mask);
            if (out_dir.empty()) out_dir = "eval-out";
            const auto res = koopid::cmd_eval(model_path, data_dir, opt, out_dir);
            std::cout << "NRMS " << res.report.nrms << "  RMS " << res.report.rms
                      << "  (report: " << res.report_path << ")\n";
        } else if (demo->parsed()) {
            koopid::cmd_demo_embedding(da, db, dc, koopid::Vec{dx1, dx2}, dsteps, dpsi,
                                       std::cout);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const koopid::Error& e) {
        std::cerr << "error[" << e.code_name() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
}
