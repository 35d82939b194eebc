#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "adam.hpp"
#include "augment.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "genconvit.hpp"
#include "imageio.hpp"
#include "metrics.hpp"

namespace gcv::run {

// Sub-stream keys: every random decision is a pure function of
// (master seed, stream, epoch, index), which is what makes a resumed run
// bitwise identical to an uninterrupted one.
constexpr u64 kShuffleA = 0xA151;
constexpr u64 kShuffleB = 0xB151;
constexpr u64 kAugA = 0xA906;
constexpr u64 kAugB = 0xB906;
constexpr u64 kEpsB = 0xE125;

struct TrainSample {
    std::string path;
    int label = 0;
};

inline std::vector<data::VideoRecord> videos_of_split(const std::vector<data::VideoRecord>& all,
                                                      data::Split s) {
    std::vector<data::VideoRecord> out;
    for (const auto& v : all)
        if (v.split == s) out.push_back(v);
    return out;
}

// One record per training frame. The per-video frame choice is the uniform
// sampler, so the sample list is the same every epoch; shuffling and
// augmentation supply the per-epoch variety.
inline std::vector<TrainSample> train_samples(const std::vector<data::VideoRecord>& videos,
                                              const RunConfig& cfg) {
    std::vector<TrainSample> out;
    for (const auto& v : videos) {
        if (v.split != data::Split::train) continue;
        i64 want = cfg.data.frames_train;
        if (v.label == data::kLabelReal)
            want = std::max<i64>(1, std::llround(static_cast<double>(want) *
                                                 cfg.data.real_frames_mult));
        for (const auto& p : data::sample_frames(v.frames, want)) out.push_back({p, v.label});
    }
    if (out.empty()) throw DataError("training split has no samples");
    return out;
}

inline std::vector<i64> shuffled_indices(i64 n, Rng& rng) {
    std::vector<i64> idx(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (i64 i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(uniform_int(rng, 0, i))]);
    return idx;
}

// Loads one training batch; augmentation rng is keyed by the sample's dataset
// index, not its batch position.
inline Tensor<float> load_training_batch(const std::vector<TrainSample>& samples,
                                         const std::vector<i64>& order, i64 begin, i64 end,
                                         const RunConfig& cfg, u64 aug_stream, i64 epoch,
                                         std::vector<int>& labels) {
    data::AugmentConfig acfg;
    acfg.rate = cfg.train.aug_rate;
    std::vector<Tensor<float>> frames;
    labels.clear();
    for (i64 i = begin; i < end; ++i) {
        const i64 at = order[static_cast<size_t>(i)];
        const TrainSample& s = samples[static_cast<size_t>(at)];
        data::Image img = data::read_image(s.path);
        Rng rng = make_rng(cfg.train.seed, aug_stream, static_cast<u64>(epoch), static_cast<u64>(at));
        img = data::augment(img, acfg, rng);
        frames.push_back(data::normalize(img, cfg.model.image,
                                         static_cast<float>(cfg.model.norm_mean),
                                         static_cast<float>(cfg.model.norm_std)));
        labels.push_back(s.label);
    }
    return data::stack_frames(frames);
}

inline Tensor<float> load_video_frames(const std::vector<std::string>& paths,
                                       const ModelConfig& m) {
    std::vector<Tensor<float>> frames;
    for (const auto& p : paths)
        frames.push_back(data::normalize(data::read_image(p), m.image,
                                         static_cast<float>(m.norm_mean),
                                         static_cast<float>(m.norm_std)));
    return data::stack_frames(frames);
}

// Video-level ensemble accuracy at threshold 0.5.
inline double ensemble_accuracy(net::GenConViT<float>& model,
                                const std::vector<data::VideoRecord>& videos,
                                const RunConfig& cfg) {
    if (videos.empty()) return 0.0;
    detach_params<float>(model);
    i64 correct = 0;
    for (const auto& v : videos) {
        const auto paths = data::sample_frames(v.frames, cfg.data.frames_eval);
        const auto pred =
            net::predict_video(model.a, model.b, load_video_frames(paths, cfg.model));
        if ((pred.fake ? 1 : 0) == v.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(videos.size());
}

struct EpochRow {
    i64 epoch = 0;  // 1-based
    double loss_a = 0, loss_b = 0, recon_mse_b = 0, val_acc = 0;
};

inline std::string csv_header(const RunConfig& cfg) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "# preset=%s seed=%llu lr=%.10g weight_decay=%.10g batch_a=%lld batch_b=%lld "
                  "epochs=%lld aug_rate=%.10g frames_train=%lld\n",
                  cfg.preset.c_str(), static_cast<unsigned long long>(cfg.train.seed),
                  cfg.train.lr, cfg.train.weight_decay, static_cast<long long>(cfg.train.batch_a),
                  static_cast<long long>(cfg.train.batch_b), static_cast<long long>(cfg.train.epochs),
                  cfg.train.aug_rate, static_cast<long long>(cfg.data.frames_train));
    return std::string(buf) + "epoch,loss_a,loss_b,recon_mse_b,val_acc\n";
}

inline std::string csv_row(const EpochRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.8f,%.8f,%.8f,%.6f\n", static_cast<long long>(r.epoch),
                  r.loss_a, r.loss_b, r.recon_mse_b, r.val_acc);
    return buf;
}

inline void save_train_checkpoint(const std::string& path, const RunConfig& cfg, i64 epochs_done,
                                  net::GenConViT<float>& model, const Adam<float>& opt_a,
                                  const Adam<float>& opt_b) {
    io::CheckpointMeta meta;
    meta.config = cfg;
    meta.epoch = epochs_done;
    meta.seed = cfg.train.seed;
    meta.extra["opt_a_steps"] = opt_a.step_count;
    meta.extra["opt_b_steps"] = opt_b.step_count;
    io::NamedTensors t = io::snapshot_model(model);
    io::add_adam_state(t, opt_a, "opt_a");
    io::add_adam_state(t, opt_b, "opt_b");
    io::save_checkpoint(path, meta, t);
}

// Trains networks A and B with separate optimizers and batch streams, one
// pass over each per epoch, starting after `start_epoch` completed epochs.
// Appends one CSV row per epoch to `csv` (may be null) and saves a resumable
// checkpoint after every epoch when `ckpt_path` is nonempty.
inline std::vector<EpochRow> train(net::GenConViT<float>& model, Adam<float>& opt_a,
                                   Adam<float>& opt_b,
                                   const std::vector<data::VideoRecord>& videos,
                                   const RunConfig& cfg, i64 start_epoch = 0,
                                   std::ostream* csv = nullptr,
                                   const std::string& ckpt_path = "",
                                   const std::function<void(const EpochRow&)>& on_epoch = {}) {
    const std::vector<TrainSample> samples = train_samples(videos, cfg);
    const std::vector<data::VideoRecord> valid = videos_of_split(videos, data::Split::valid);
    const i64 n = static_cast<i64>(samples.size());

    opt_a.lr = static_cast<float>(cfg.train.lr);
    opt_a.weight_decay = static_cast<float>(cfg.train.weight_decay);
    opt_b.lr = static_cast<float>(cfg.train.lr);
    opt_b.weight_decay = static_cast<float>(cfg.train.weight_decay);

    std::vector<EpochRow> rows;
    for (i64 e = start_epoch; e < cfg.train.epochs; ++e) {
        double sum_a = 0;
        {
            Rng shuffle = make_rng(cfg.train.seed, kShuffleA, static_cast<u64>(e));
            const std::vector<i64> order = shuffled_indices(n, shuffle);
            std::vector<int> labels;
            for (i64 at = 0; at < n; at += cfg.train.batch_a) {
                const i64 stop = std::min(n, at + cfg.train.batch_a);
                Tensor<float> x =
                    load_training_batch(samples, order, at, stop, cfg, kAugA, e, labels);
                Tape<float> tape;
                watch_params(model.a, tape);
                Tensor<float> loss = net::loss_a(model.a.forward(x).logits, labels);
                const double lv = static_cast<double>(loss.item());
                if (!std::isfinite(lv))
                    throw NumericError("epoch " + std::to_string(e + 1) + ": loss_a is " +
                                       std::to_string(lv) + " at sample offset " +
                                       std::to_string(at) + "; aborting");
                tape.backward(loss);
                opt_a.step(model.a, tape);
                sum_a += lv * static_cast<double>(stop - at);
            }
        }

        double sum_b = 0, sum_rec = 0;
        {
            Rng shuffle = make_rng(cfg.train.seed, kShuffleB, static_cast<u64>(e));
            const std::vector<i64> order = shuffled_indices(n, shuffle);
            std::vector<int> labels;
            for (i64 at = 0; at < n; at += cfg.train.batch_b) {
                const i64 stop = std::min(n, at + cfg.train.batch_b);
                Tensor<float> x =
                    load_training_batch(samples, order, at, stop, cfg, kAugB, e, labels);
                Tape<float> tape;
                watch_params(model.b, tape);
                Rng eps_rng = make_rng(cfg.train.seed, kEpsB, static_cast<u64>(e),
                                       static_cast<u64>(at));
                Tensor<float> eps =
                    gen::sample_eps<float>({stop - at, cfg.model.vae.latent}, eps_rng);
                auto out = model.b.forward(x, true, eps);
                net::LossB<float> lb = net::loss_b(out, labels, x, cfg.model);
                const double lv = static_cast<double>(lb.total.item());
                const double rec = static_cast<double>(lb.rec.item());
                if (!std::isfinite(lv))
                    throw NumericError("epoch " + std::to_string(e + 1) + ": loss_b is " +
                                       std::to_string(lv) + " at sample offset " +
                                       std::to_string(at) + "; aborting");
                tape.backward(lb.total);
                opt_b.step(model.b, tape);
                sum_b += lv * static_cast<double>(stop - at);
                sum_rec += rec * static_cast<double>(stop - at);
            }
        }

        EpochRow row;
        row.epoch = e + 1;
        row.loss_a = sum_a / static_cast<double>(n);
        row.loss_b = sum_b / static_cast<double>(n);
        row.recon_mse_b = sum_rec / static_cast<double>(n);
        row.val_acc = ensemble_accuracy(model, valid, cfg);
        rows.push_back(row);
        if (csv) {
            (*csv) << csv_row(row);
            csv->flush();
        }
        if (!ckpt_path.empty()) save_train_checkpoint(ckpt_path, cfg, e + 1, model, opt_a, opt_b);
        if (on_epoch) on_epoch(row);
    }
    return rows;
}

struct VideoScore {
    std::string video_id;
    int label = 0;
    double score = 0;
    i64 frames_used = 0;
};

struct EvalOutput {
    std::vector<VideoScore> scores;
    metrics::EvalReport report;
};

// Scores every video with the frame ensemble and aggregates an EvalReport.
inline EvalOutput evaluate_videos(net::GenConViT<float>& model,
                                  const std::vector<data::VideoRecord>& videos,
                                  const RunConfig& cfg) {
    if (videos.empty()) throw DataError("evaluation set has no videos");
    detach_params<float>(model);
    EvalOutput out;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& v : videos) {
        const auto paths = data::sample_frames(v.frames, cfg.data.frames_eval);
        const auto pred =
            net::predict_video(model.a, model.b, load_video_frames(paths, cfg.model));
        out.scores.push_back({v.video_id, v.label, pred.score, pred.frames_used});
        scores.push_back(pred.score);
        labels.push_back(v.label);
    }
    out.report = metrics::evaluate(scores, labels, 0.5);
    return out;
}

inline std::string scores_csv(const EvalOutput& out) {
    std::string s = "video_id,label,score,frames_used\n";
    for (const auto& v : out.scores) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%lld\n", v.video_id.c_str(), v.label,
                      v.score, static_cast<long long>(v.frames_used));
        s += buf;
    }
    return s;
}

}  // namespace gcv::run
