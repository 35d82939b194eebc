// genconvit command line: synth | train | eval | predict | roc
//
// Exit codes:
//   0  success
//   1  unexpected internal error
//   2  usage error: bad flags, invalid config values, unusable paths
//   3  input exists but holds nothing usable (empty video dir, empty split,
//      unparseable or single-class score file)
//   4  dataset root or checkpoint file not found
//   5  numeric failure (non-finite loss during training)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <genconvit/checkpoint.hpp>
#include <genconvit/config.hpp>
#include <genconvit/data.hpp>
#include <genconvit/metrics.hpp>
#include <genconvit/runner.hpp>
#include <genconvit/synth.hpp>

namespace fs = std::filesystem;
using namespace gcv;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kUsage = 2;
constexpr int kEmpty = 3;
constexpr int kMissing = 4;
constexpr int kNumeric = 5;

struct GlobalArgs {
    std::string config_path;
    std::string preset = "tiny";
    u64 seed = 42;
    i64 threads = 0;
    CLI::Option* o_config = nullptr;
    CLI::Option* o_preset = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_threads = nullptr;
};

// Precedence: flag > config file > checkpoint snapshot > built-in default.
RunConfig build_config(const GlobalArgs& g, const std::optional<RunConfig>& base) {
    RunConfig cfg;
    if (base) cfg = *base;
    if (g.o_config->count()) {
        std::ifstream in(g.config_path);
        if (!in) throw IoError("cannot open config file: " + g.config_path);
        from_json(nlohmann::json::parse(in), cfg);
    }
    if (g.o_preset->count()) {
        cfg.preset = g.preset;
        cfg.model = ModelConfig::preset(g.preset);
    }
    if (g.o_seed->count()) cfg.train.seed = g.seed;
    if (g.o_threads->count()) cfg.threads = g.threads;
    return cfg;
}

void apply_threads(const RunConfig& cfg) {
    int n = cfg.threads > 0 ? static_cast<int>(cfg.threads)
                            : static_cast<int>(std::thread::hardware_concurrency());
    set_num_threads(n);
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("short write to " + path);
}

std::string video_id_of(const std::string& dir) {
    fs::path p = fs::path(dir).lexically_normal();
    if (p.filename().empty() || p.filename() == ".") p = p.parent_path();
    return p.filename().string();
}

io::LoadedCheckpoint load_checkpoint_arg(const std::string& path, int& rc) {
    if (!fs::exists(path)) {
        std::fprintf(stderr, "error: checkpoint not found: %s\n", path.c_str());
        rc = kMissing;
        return {};
    }
    rc = kOk;
    return io::load_checkpoint(path);
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    std::string out;
    i64 videos = 20;
    i64 frames = 15;
    i64 size = 224;
};

int cmd_synth(const SynthArgs& a, const GlobalArgs& g) {
    const u64 seed = g.o_seed->count() ? g.seed : 42;
    data::gen_synthetic(a.videos, a.frames, seed, a.out, a.size);

    std::vector<std::string> warnings;
    const std::array<i64, 3> ratios{80, 15, 5};
    auto videos = data::scan_videos(a.out, ratios, seed, &warnings);
    print_warnings(warnings);
    const std::string manifest = (fs::path(a.out) / "manifest.tsv").string();
    data::write_manifest(data::flatten(videos), manifest);

    i64 n_real = 0, n_fake = 0, frames = 0;
    i64 per_split[3] = {0, 0, 0};
    for (const auto& v : videos) {
        (v.label == data::kLabelFake ? n_fake : n_real)++;
        frames += static_cast<i64>(v.frames.size());
        per_split[static_cast<int>(v.split)]++;
    }
    std::printf("wrote %lld real + %lld fake videos (%lld frames, %lldx%lld) under %s\n",
                static_cast<long long>(n_real), static_cast<long long>(n_fake),
                static_cast<long long>(frames), static_cast<long long>(a.size),
                static_cast<long long>(a.size), a.out.c_str());
    std::printf("splits at 80/15/5: train=%lld valid=%lld test=%lld\n",
                static_cast<long long>(per_split[0]), static_cast<long long>(per_split[1]),
                static_cast<long long>(per_split[2]));
    std::printf("manifest: %s\n", manifest.c_str());
    return kOk;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string data_root;
    std::string resume;
    std::string checkpoint_dir;
    std::string metrics_dir;
    i64 epochs = 0;
    double lr = 0, weight_decay = 0, aug_rate = 0, real_frames_mult = 0;
    i64 batch_a = 0, batch_b = 0, frames_train = 0, frames_eval = 0;
    CLI::Option *o_data = nullptr, *o_resume = nullptr, *o_ckpt_dir = nullptr,
                *o_metrics_dir = nullptr, *o_epochs = nullptr, *o_lr = nullptr, *o_wd = nullptr,
                *o_aug = nullptr, *o_mult = nullptr, *o_ba = nullptr, *o_bb = nullptr,
                *o_ft = nullptr, *o_fe = nullptr;
};

void apply_train_flags(const TrainArgs& a, RunConfig& cfg) {
    if (a.o_data->count()) cfg.data.root = a.data_root;
    if (a.o_ckpt_dir->count()) cfg.io.checkpoint_dir = a.checkpoint_dir;
    if (a.o_metrics_dir->count()) cfg.io.metrics_dir = a.metrics_dir;
    if (a.o_epochs->count()) cfg.train.epochs = a.epochs;
    if (a.o_lr->count()) cfg.train.lr = a.lr;
    if (a.o_wd->count()) cfg.train.weight_decay = a.weight_decay;
    if (a.o_aug->count()) cfg.train.aug_rate = a.aug_rate;
    if (a.o_mult->count()) cfg.data.real_frames_mult = a.real_frames_mult;
    if (a.o_ba->count()) cfg.train.batch_a = a.batch_a;
    if (a.o_bb->count()) cfg.train.batch_b = a.batch_b;
    if (a.o_ft->count()) cfg.data.frames_train = a.frames_train;
    if (a.o_fe->count()) cfg.data.frames_eval = a.frames_eval;
}

int cmd_train(const TrainArgs& a, const GlobalArgs& g) {
    std::optional<RunConfig> base;
    io::LoadedCheckpoint ckpt;
    const bool resume = a.o_resume->count() > 0;
    if (resume) {
        int rc = 0;
        ckpt = load_checkpoint_arg(a.resume, rc);
        if (rc != kOk) return rc;
        base = ckpt.meta.config;
    }
    RunConfig cfg = build_config(g, base);
    apply_train_flags(a, cfg);
    cfg.validate();
    apply_threads(cfg);

    if (!fs::is_directory(cfg.data.root)) {
        std::fprintf(stderr, "error: dataset root not found: %s\n", cfg.data.root.c_str());
        return kMissing;
    }
    std::vector<std::string> warnings;
    auto videos = data::scan_videos(cfg.data.root, cfg.data.split, cfg.train.seed, &warnings);
    print_warnings(warnings);

    auto model = net::GenConViT<float>::make(cfg.model, cfg.train.seed);
    Adam<float> opt_a, opt_b;
    i64 start_epoch = 0;
    if (resume) {
        io::restore_model(model, ckpt.tensors);
        io::restore_adam_state(opt_a, ckpt.tensors, "opt_a",
                               ckpt.meta.extra.value("opt_a_steps", i64{0}));
        io::restore_adam_state(opt_b, ckpt.tensors, "opt_b",
                               ckpt.meta.extra.value("opt_b_steps", i64{0}));
        start_epoch = ckpt.meta.epoch;
        std::fprintf(stderr, "resuming after %lld completed epoch(s) from %s\n",
                     static_cast<long long>(start_epoch), a.resume.c_str());
    }
    if (start_epoch >= cfg.train.epochs) {
        std::fprintf(stderr, "error: checkpoint already has %lld epochs; raise --epochs\n",
                     static_cast<long long>(start_epoch));
        return kUsage;
    }

    fs::create_directories(cfg.io.checkpoint_dir);
    fs::create_directories(cfg.io.metrics_dir);
    const std::string ckpt_path = (fs::path(cfg.io.checkpoint_dir) / "last.ckpt").string();
    {
        const bool existed = fs::exists(ckpt_path);
        std::ofstream probe(ckpt_path, std::ios::binary | std::ios::app);
        if (!probe) throw IoError("checkpoint dir is not writable: " + cfg.io.checkpoint_dir);
        probe.close();
        if (!existed) fs::remove(ckpt_path);
    }
    const std::string csv_path = (fs::path(cfg.io.metrics_dir) / "train_metrics.csv").string();
    const bool append = resume && start_epoch > 0 && fs::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!csv) throw IoError("cannot write metrics CSV: " + csv_path);
    if (!append) csv << run::csv_header(cfg);

    std::fprintf(stderr, "training %s preset: %lld videos, %lld -> %lld epochs, threads=%d\n",
                 cfg.preset.c_str(), static_cast<long long>(videos.size()),
                 static_cast<long long>(start_epoch), static_cast<long long>(cfg.train.epochs),
                 ThreadPool::instance().threads());
    auto rows = run::train(model, opt_a, opt_b, videos, cfg, start_epoch, &csv, ckpt_path,
                           [](const run::EpochRow& r) {
                               std::fprintf(stderr,
                                            "epoch %lld: loss_a=%.6f loss_b=%.6f recon=%.6f "
                                            "val_acc=%.4f\n",
                                            static_cast<long long>(r.epoch), r.loss_a, r.loss_b,
                                            r.recon_mse_b, r.val_acc);
                           });

    const run::EpochRow& last = rows.back();
    std::printf("trained to epoch %lld: loss_a=%.6f loss_b=%.6f val_acc=%.4f\n",
                static_cast<long long>(last.epoch), last.loss_a, last.loss_b, last.val_acc);
    std::printf("metrics: %s\ncheckpoint: %s\n", csv_path.c_str(), ckpt_path.c_str());
    return kOk;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
    std::string checkpoint;
    std::string data_root;
    std::string split = "test";
    std::string out_dir;
    i64 frames_eval = 0;
    CLI::Option *o_data = nullptr, *o_out = nullptr, *o_fe = nullptr;
};

int cmd_eval(const EvalArgs& a, const GlobalArgs& g) {
    int rc = 0;
    io::LoadedCheckpoint ckpt = load_checkpoint_arg(a.checkpoint, rc);
    if (rc != kOk) return rc;
    RunConfig cfg = build_config(g, ckpt.meta.config);
    if (a.o_data->count()) cfg.data.root = a.data_root;
    if (a.o_fe->count()) cfg.data.frames_eval = a.frames_eval;
    cfg.validate();
    apply_threads(cfg);

    if (!fs::is_directory(cfg.data.root)) {
        std::fprintf(stderr, "error: dataset root not found: %s\n", cfg.data.root.c_str());
        return kMissing;
    }
    auto model = net::GenConViT<float>::make(cfg.model, cfg.train.seed);
    io::restore_model(model, ckpt.tensors);

    std::vector<std::string> warnings;
    auto videos = data::scan_videos(cfg.data.root, cfg.data.split, cfg.train.seed, &warnings);
    print_warnings(warnings);
    auto subset = run::videos_of_split(videos, data::split_from(a.split));
    if (subset.empty()) {
        std::fprintf(stderr, "error: split '%s' has no videos under %s\n", a.split.c_str(),
                     cfg.data.root.c_str());
        return kEmpty;
    }

    auto out = run::evaluate_videos(model, subset, cfg);
    print_warnings(out.report.warnings);

    const std::string out_dir = a.o_out->count() ? a.out_dir : cfg.io.metrics_dir;
    fs::create_directories(out_dir);
    const std::string report = metrics::report_json(out.report).dump(2) + "\n";
    write_text((fs::path(out_dir) / "eval_report.json").string(), report);
    write_text((fs::path(out_dir) / "eval_scores.csv").string(), run::scores_csv(out));
    if (out.report.auc)
        metrics::emit_roc_plot((fs::path(out_dir) / "roc.svg").string(), out.report.roc,
                               *out.report.auc);
    std::fprintf(stderr, "eval outputs in %s\n", out_dir.c_str());
    std::fputs(report.c_str(), stdout);
    return kOk;
}

// -------------------------------------------------------------- predict ----

struct PredictArgs {
    std::string checkpoint;
    std::string video_dir;
    i64 frames = 0;
    CLI::Option* o_frames = nullptr;
};

int cmd_predict(const PredictArgs& a, const GlobalArgs& g) {
    int rc = 0;
    io::LoadedCheckpoint ckpt = load_checkpoint_arg(a.checkpoint, rc);
    if (rc != kOk) return rc;
    RunConfig cfg = build_config(g, ckpt.meta.config);
    if (a.o_frames->count()) cfg.data.frames_eval = a.frames;
    cfg.validate();
    apply_threads(cfg);

    if (!fs::is_directory(a.video_dir)) {
        std::fprintf(stderr, "error: video directory not found: %s\n", a.video_dir.c_str());
        return kMissing;
    }
    std::vector<std::string> warnings;
    auto frames = data::list_frames(a.video_dir, &warnings);
    print_warnings(warnings);
    if (frames.empty()) {
        std::fprintf(stderr, "error: no frames in %s\n", a.video_dir.c_str());
        return kEmpty;
    }

    auto model = net::GenConViT<float>::make(cfg.model, cfg.train.seed);
    io::restore_model(model, ckpt.tensors);
    auto paths = data::sample_frames(frames, cfg.data.frames_eval);
    auto pred = net::predict_video(model.a, model.b, run::load_video_frames(paths, cfg.model));
    std::printf("%s  %.6f  %s  %lld\n", video_id_of(a.video_dir).c_str(), pred.score,
                pred.fake ? "FAKE" : "REAL", static_cast<long long>(pred.frames_used));
    return kOk;
}

// ------------------------------------------------------------------ roc ----

struct RocArgs {
    std::string scores_path;
    std::string out = "roc.svg";
};

int cmd_roc(const RocArgs& a) {
    if (!fs::exists(a.scores_path)) {
        std::fprintf(stderr, "error: score file not found: %s\n", a.scores_path.c_str());
        return kMissing;
    }
    std::ifstream in(a.scores_path);
    if (!in) throw IoError("cannot open " + a.scores_path);
    std::vector<double> scores;
    std::vector<int> labels;
    std::string line;
    i64 lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError("roc: line " + std::to_string(lineno) + " is not `score,label`");
        char* end = nullptr;
        const std::string ss = line.substr(0, comma);
        const double score = std::strtod(ss.c_str(), &end);
        if (end == ss.c_str()) {
            if (lineno == 1) continue;  // header row
            throw DataError("roc: bad score on line " + std::to_string(lineno));
        }
        const std::string ls = line.substr(comma + 1);
        const long label = std::strtol(ls.c_str(), &end, 10);
        if (end == ls.c_str() || (label != 0 && label != 1))
            throw DataError("roc: bad label on line " + std::to_string(lineno) +
                            " (want 0 or 1)");
        scores.push_back(score);
        labels.push_back(static_cast<int>(label));
    }
    if (scores.empty()) throw DataError("roc: no data rows in " + a.scores_path);

    auto points = metrics::roc_curve(scores, labels);
    const double auc = metrics::auc_trapezoid(points);
    metrics::emit_roc_plot(a.out, points, auc);
    const std::string csv = fs::path(a.out).replace_extension(".csv").string();
    std::printf("auc=%.12f n=%zu roc_points=%zu\nplot: %s\ncsv: %s\n", auc, scores.size(),
                points.size(), a.out.c_str(), csv.c_str());
    return kOk;
}

int run_guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumeric;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kEmpty;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kInternal;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deepfake video detector: dual generative CNN-transformer ensemble"};
    app.require_subcommand(1);

    GlobalArgs g;
    g.o_config = app.add_option("--config", g.config_path,
                                "JSON config file; explicit flags override it");
    g.o_preset = app.add_option("--preset", g.preset, "model scale: tiny or toy")
                     ->check(CLI::IsMember({"tiny", "toy"}));
    g.o_seed = app.add_option("--seed", g.seed, "master seed for init, splits, and data order");
    g.o_threads = app.add_option("--threads", g.threads, "worker threads (0 = all cores)");

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic face-video dataset");
    synth->fallthrough();
    SynthArgs sa;
    synth->add_option("--out", sa.out, "output dataset root")->required();
    synth->add_option("--videos", sa.videos, "videos per class")->capture_default_str();
    synth->add_option("--frames", sa.frames, "frames per video")->capture_default_str();
    synth->add_option("--size", sa.size, "square frame size in pixels")->capture_default_str();

    auto* train = app.add_subcommand("train", "train both networks and write CSV + checkpoints");
    train->fallthrough();
    TrainArgs ta;
    ta.o_data = train->add_option("--data", ta.data_root, "dataset root (real/ and fake/ trees)");
    ta.o_resume = train->add_option("--resume", ta.resume, "checkpoint to continue from");
    ta.o_ckpt_dir = train->add_option("--checkpoint-dir", ta.checkpoint_dir,
                                      "where last.ckpt is written");
    ta.o_metrics_dir = train->add_option("--metrics-dir", ta.metrics_dir,
                                         "where train_metrics.csv is written");
    ta.o_epochs = train->add_option("--epochs", ta.epochs, "total epochs to reach");
    ta.o_lr = train->add_option("--lr", ta.lr, "Adam learning rate");
    ta.o_wd = train->add_option("--weight-decay", ta.weight_decay, "Adam weight decay");
    ta.o_aug = train->add_option("--aug-rate", ta.aug_rate, "augmentation probability per image");
    ta.o_mult = train->add_option("--real-frames-mult", ta.real_frames_mult,
                                  "frames_train multiplier for REAL videos");
    ta.o_ba = train->add_option("--batch-a", ta.batch_a, "batch size for network A");
    ta.o_bb = train->add_option("--batch-b", ta.batch_b, "batch size for network B");
    ta.o_ft = train->add_option("--frames-train", ta.frames_train, "training frames per video");
    ta.o_fe = train->add_option("--frames-eval", ta.frames_eval, "validation frames per video");

    auto* eval = app.add_subcommand("eval", "score a split and write report, scores, and ROC");
    eval->fallthrough();
    EvalArgs ea;
    eval->add_option("--checkpoint", ea.checkpoint, "trained checkpoint")->required();
    ea.o_data = eval->add_option("--data", ea.data_root, "dataset root override");
    eval->add_option("--split", ea.split, "train, valid, or test")
        ->check(CLI::IsMember({"train", "valid", "test"}))
        ->capture_default_str();
    ea.o_out = eval->add_option("--out-dir", ea.out_dir, "output dir (default: metrics dir)");
    ea.o_fe = eval->add_option("--frames-eval", ea.frames_eval, "frames per video override");

    auto* predict = app.add_subcommand("predict", "score one video directory of frames");
    predict->fallthrough();
    PredictArgs pa;
    predict->add_option("--checkpoint", pa.checkpoint, "trained checkpoint")->required();
    predict->add_option("--video", pa.video_dir, "directory of frame images")->required();
    pa.o_frames = predict->add_option("--frames", pa.frames, "max frames to use");

    auto* roc = app.add_subcommand("roc", "compute AUC and plot ROC from a score,label CSV");
    RocArgs ra;
    roc->add_option("--scores", ra.scores_path, "CSV with `score,label` rows")->required();
    roc->add_option("--out", ra.out, "output SVG path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (synth->parsed()) return run_guarded([&] { return cmd_synth(sa, g); });
    if (train->parsed()) return run_guarded([&] { return cmd_train(ta, g); });
    if (eval->parsed()) return run_guarded([&] { return cmd_eval(ea, g); });
    if (predict->parsed()) return run_guarded([&] { return cmd_predict(pa, g); });
    if (roc->parsed()) return run_guarded([&] { return cmd_roc(ra); });
    return kUsage;
}
