// End-to-end reproducibility: two generate -> train -> eval pipelines with the
// same seed must leave byte-identical artifacts, whatever the worker count.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "koopid/experiment.hpp"

#include "acceptance_util.hpp"

using namespace koopid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing:" + path + ">";
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunArtifacts {
    std::string manifest, csv, model, train_report, eval_report, sim_csv;
};

RunArtifacts run_pipeline(ExperimentConfig cfg, const std::string& root, std::size_t workers) {
    cfg.data_dir = root + "/data";
    cfg.out_dir = root + "/run";
    cfg.train.workers = workers;
    cmd_generate(cfg);
    cfg.data.source = "dir";
    cfg.data.dir = cfg.data_dir;
    const TrainResult tr = cmd_train(cfg, "", /*quiet=*/true);
    const EvalResult ev = cmd_eval(tr.model_path, cfg.data.dir, EvalOptions{}, root + "/eval");

    RunArtifacts a;
    a.manifest = slurp(cfg.data_dir + "/manifest.json");
    a.csv = slurp(cfg.data_dir + "/train_000.csv");
    a.model = slurp(tr.model_path);
    a.train_report = slurp(tr.report_path);
    a.eval_report = slurp(ev.report_path);
    a.sim_csv = slurp(root + "/eval/sim_000.csv");
    return a;
}

bool identical(const RunArtifacts& a, const RunArtifacts& b, std::string& which) {
    if (a.manifest != b.manifest) { which = "dataset manifest"; return false; }
    if (a.csv != b.csv) { which = "trajectory CSV"; return false; }
    if (a.model != b.model) { which = "model file"; return false; }
    if (a.train_report != b.train_report) { which = "train report"; return false; }
    if (a.eval_report != b.eval_report) { which = "eval report"; return false; }
    if (a.sim_csv != b.sim_csv) { which = "simulation CSV"; return false; }
    return true;
}

ExperimentConfig small_fs_config() {
    ExperimentConfig cfg;
    cfg.name = "det-fs";
    cfg.seed = 11;
    cfg.data.source = "vdp";
    cfg.data.vdp.n_train = 3;
    cfg.data.vdp.n_val = 1;
    cfg.data.vdp.n_test = 1;
    cfg.data.vdp.length = 80;
    cfg.model.mode = EncoderMode::FullState;
    cfg.model.n_x = 2;
    cfg.model.n_y = 2;
    cfg.model.n_z = 8;
    cfg.model.encoder_hidden = {16};
    cfg.train.T = 12;
    cfg.train.batch_size = 32;
    cfg.train.epochs = 3;
    cfg.train.alpha = 1e-3;
    return cfg;
}

ExperimentConfig small_io_config() {
    ExperimentConfig cfg;
    cfg.name = "det-io";
    cfg.seed = 12;
    cfg.data.source = "duffing";
    cfg.data.duffing.train_length = 400;
    cfg.data.duffing.val_length = 150;
    cfg.data.duffing.test_length = 150;
    cfg.data.duffing.arrowhead_length = 150;
    cfg.model.mode = EncoderMode::IOHistory;
    cfg.model.n_y = 1;
    cfg.model.n_u = 1;
    cfg.model.n_z = 6;
    cfg.model.n_a = 4;
    cfg.model.n_b = 4;
    cfg.model.encoder_hidden = {8};
    cfg.model.b_hidden = {8};
    cfg.train.T = 8;
    cfg.train.batch_size = 64;
    cfg.train.epochs = 3;
    cfg.train.alpha = 1e-3;
    return cfg;
}

}  // namespace

int main() {
    const fs::path base = fs::temp_directory_path() / "koopid_acceptance_det";
    fs::remove_all(base);

    bool ok = true;
    std::string which, detail;

    {
        const RunArtifacts a = run_pipeline(small_fs_config(), (base / "fs_a").string(), 1);
        const RunArtifacts b = run_pipeline(small_fs_config(), (base / "fs_b").string(), 1);
        const RunArtifacts c = run_pipeline(small_fs_config(), (base / "fs_c").string(), 4);
        if (!identical(a, b, which)) { ok = false; detail = "full-state rerun differs: " + which; }
        else if (!identical(a, c, which)) { ok = false; detail = "full-state workers=4 differs: " + which; }
    }
    if (ok) {
        const RunArtifacts a = run_pipeline(small_io_config(), (base / "io_a").string(), 1);
        const RunArtifacts b = run_pipeline(small_io_config(), (base / "io_b").string(), 3);
        if (!identical(a, b, which)) { ok = false; detail = "io-history workers=3 differs: " + which; }
    }
    if (ok) detail = "generate/train/eval artifacts byte-identical across reruns and worker counts";

    acceptance::criterion(8, "end-to-end determinism", ok, detail);
    fs::remove_all(base);
    return acceptance::exit_code();
}
