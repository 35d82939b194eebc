#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "genconvit/common.hpp"

namespace gcv {

// Autoencoder: five stride-1 conv stages (each followed by 2x2 maxpool), then
// a mirrored stack of stride-2 transposed convs back to RGB.
struct AeConfig {
    std::vector<i64> widths{16, 32, 64, 128, 256};
};

// Variational autoencoder: four stride-2 conv stages, linear mu/logvar heads,
// a linear back to dec_widths[0] x (image/32)^2, then four stride-2 transposed
// convs to RGB at half the input resolution.
struct VaeConfig {
    std::vector<i64> enc_widths{16, 32, 64, 128};
    i64 latent = 12544;
    std::vector<i64> dec_widths{256, 64, 32, 16};
};

// ConvNeXt feature stages -> 1x1 token projection -> windowed-attention tower.
struct BackboneConfig {
    i64 stem = 4;
    std::vector<i64> depths{3, 3, 9, 3};
    std::vector<i64> widths{96, 192, 384, 768};
    i64 embed_dim = 768;
    i64 window = 7;
    i64 heads = 12;
    i64 swin_depth = 4;
    i64 head_out = 1000;
};

struct ModelConfig {
    i64 image = 224;
    i64 classes = 2;
    AeConfig ae;
    VaeConfig vae;
    BackboneConfig backbone;
    double lambda_recon = 1.0;
    double beta_kl = 0.0;
    double norm_mean = 0.5;
    double norm_std = 0.5;

    void validate() const {
        if (image <= 0 || image % 32 != 0)
            throw ConfigError("model.image must be a positive multiple of 32, got " +
                              std::to_string(image));
        if (classes < 2) throw ConfigError("model.classes must be at least 2");
        if (ae.widths.size() != 5)
            throw ConfigError("model.ae.widths must list 5 stages");
        for (i64 w : ae.widths)
            if (w <= 0) throw ConfigError("model.ae.widths must be positive");
        if (vae.enc_widths.size() != 4 || vae.dec_widths.size() != 4)
            throw ConfigError("model.vae widths must list 4 encoder and 4 decoder stages");
        for (i64 w : vae.enc_widths)
            if (w <= 0) throw ConfigError("model.vae.enc_widths must be positive");
        for (i64 w : vae.dec_widths)
            if (w <= 0) throw ConfigError("model.vae.dec_widths must be positive");
        const i64 seed_grid = image / 32;
        if (vae.latent != vae.dec_widths[0] * seed_grid * seed_grid)
            throw ConfigError("model.vae.latent must equal dec_widths[0]*(image/32)^2 = " +
                              std::to_string(vae.dec_widths[0] * seed_grid * seed_grid) +
                              ", got " + std::to_string(vae.latent));
        const auto& b = backbone;
        if (b.stem <= 0 || image % b.stem != 0)
            throw ConfigError("model.backbone.stem must divide model.image");
        if (b.depths.empty() || b.depths.size() != b.widths.size())
            throw ConfigError("model.backbone.depths and widths must be equal-length and non-empty");
        for (i64 d : b.depths)
            if (d <= 0) throw ConfigError("model.backbone.depths must be positive");
        for (i64 w : b.widths)
            if (w <= 0) throw ConfigError("model.backbone.widths must be positive");
        const i64 halvings = static_cast<i64>(b.depths.size()) - 1;
        if ((image / b.stem) % (i64(1) << halvings) != 0)
            throw ConfigError("model.image/stem must be divisible by 2^(stages-1)");
        if (b.embed_dim <= 0 || b.heads <= 0 || b.embed_dim % b.heads != 0)
            throw ConfigError("model.backbone.embed_dim must be a positive multiple of heads");
        if (b.window <= 0) throw ConfigError("model.backbone.window must be positive");
        if (b.swin_depth <= 0) throw ConfigError("model.backbone.swin_depth must be positive");
        if (b.head_out <= 0) throw ConfigError("model.backbone.head_out must be positive");
        if (norm_std == 0.0) throw ConfigError("model.norm_std must be nonzero");
    }

    static ModelConfig tiny() { return ModelConfig{}; }

    static ModelConfig toy() {
        ModelConfig c;
        c.image = 64;
        c.ae.widths = {8, 16, 32, 64, 128};
        c.vae.enc_widths = {8, 16, 32, 64};
        c.vae.latent = 256;
        c.vae.dec_widths = {64, 32, 16, 8};
        c.backbone.depths = {1, 1, 2, 1};
        c.backbone.widths = {16, 32, 64, 128};
        c.backbone.embed_dim = 64;
        c.backbone.heads = 4;
        return c;
    }

    static ModelConfig preset(const std::string& name) {
        if (name == "tiny") return tiny();
        if (name == "toy") return toy();
        throw ConfigError("unknown preset '" + name + "' (expected tiny or toy)");
    }
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    i64 batch_a = 32;
    i64 batch_b = 16;
    i64 epochs = 30;
    double aug_rate = 0.9;
    u64 seed = 42;
};

struct DataConfig {
    std::string root = "data";
    i64 frames_train = 30;
    i64 frames_eval = 15;
    // Multiplies frames_train for REAL videos (class-imbalance lever; 1 = balanced).
    double real_frames_mult = 1.0;
    std::array<i64, 3> split{80, 15, 5};
};

struct IoConfig {
    std::string checkpoint_dir = "checkpoints";
    std::string metrics_dir = "metrics";
};

struct RunConfig {
    std::string preset = "tiny";
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    IoConfig io;
    i64 threads = 0;  // 0 = hardware concurrency

    void validate() const {
        model.validate();
        if (train.lr <= 0) throw ConfigError("train.lr must be positive");
        if (train.weight_decay < 0) throw ConfigError("train.weight_decay must be nonnegative");
        if (train.batch_a <= 0 || train.batch_b <= 0)
            throw ConfigError("train batch sizes must be positive");
        if (train.epochs <= 0) throw ConfigError("train.epochs must be positive");
        if (train.aug_rate < 0 || train.aug_rate > 1)
            throw ConfigError("train.aug_rate must lie in [0,1]");
        if (data.frames_train <= 0 || data.frames_eval <= 0)
            throw ConfigError("data frame counts must be positive");
        if (data.real_frames_mult <= 0)
            throw ConfigError("data.real_frames_mult must be positive");
        for (i64 s : data.split)
            if (s < 0) throw ConfigError("data.split parts must be nonnegative");
        if (data.split[0] + data.split[1] + data.split[2] <= 0)
            throw ConfigError("data.split must not be all zero");
        if (threads < 0) throw ConfigError("threads must be nonnegative");
    }
};

// JSON (de)serialization. from_json merges in place so partial documents
// override only the fields they mention.
inline void to_json(nlohmann::json& j, const AeConfig& c) { j = {{"widths", c.widths}}; }
inline void from_json(const nlohmann::json& j, AeConfig& c) {
    if (j.contains("widths")) j.at("widths").get_to(c.widths);
}

inline void to_json(nlohmann::json& j, const VaeConfig& c) {
    j = {{"enc_widths", c.enc_widths}, {"latent", c.latent}, {"dec_widths", c.dec_widths}};
}
inline void from_json(const nlohmann::json& j, VaeConfig& c) {
    if (j.contains("enc_widths")) j.at("enc_widths").get_to(c.enc_widths);
    if (j.contains("latent")) j.at("latent").get_to(c.latent);
    if (j.contains("dec_widths")) j.at("dec_widths").get_to(c.dec_widths);
}

inline void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = {{"stem", c.stem},           {"depths", c.depths},
         {"widths", c.widths},       {"embed_dim", c.embed_dim},
         {"window", c.window},       {"heads", c.heads},
         {"swin_depth", c.swin_depth}, {"head_out", c.head_out}};
}
inline void from_json(const nlohmann::json& j, BackboneConfig& c) {
    if (j.contains("stem")) j.at("stem").get_to(c.stem);
    if (j.contains("depths")) j.at("depths").get_to(c.depths);
    if (j.contains("widths")) j.at("widths").get_to(c.widths);
    if (j.contains("embed_dim")) j.at("embed_dim").get_to(c.embed_dim);
    if (j.contains("window")) j.at("window").get_to(c.window);
    if (j.contains("heads")) j.at("heads").get_to(c.heads);
    if (j.contains("swin_depth")) j.at("swin_depth").get_to(c.swin_depth);
    if (j.contains("head_out")) j.at("head_out").get_to(c.head_out);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"image", c.image},
         {"classes", c.classes},
         {"ae", c.ae},
         {"vae", c.vae},
         {"backbone", c.backbone},
         {"lambda_recon", c.lambda_recon},
         {"beta_kl", c.beta_kl},
         {"norm_mean", c.norm_mean},
         {"norm_std", c.norm_std}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (j.contains("image")) j.at("image").get_to(c.image);
    if (j.contains("classes")) j.at("classes").get_to(c.classes);
    if (j.contains("ae")) j.at("ae").get_to(c.ae);
    if (j.contains("vae")) j.at("vae").get_to(c.vae);
    if (j.contains("backbone")) j.at("backbone").get_to(c.backbone);
    if (j.contains("lambda_recon")) j.at("lambda_recon").get_to(c.lambda_recon);
    if (j.contains("beta_kl")) j.at("beta_kl").get_to(c.beta_kl);
    if (j.contains("norm_mean")) j.at("norm_mean").get_to(c.norm_mean);
    if (j.contains("norm_std")) j.at("norm_std").get_to(c.norm_std);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lr", c.lr},           {"weight_decay", c.weight_decay},
         {"batch_a", c.batch_a}, {"batch_b", c.batch_b},
         {"epochs", c.epochs},   {"aug_rate", c.aug_rate},
         {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("lr")) j.at("lr").get_to(c.lr);
    if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
    if (j.contains("batch_a")) j.at("batch_a").get_to(c.batch_a);
    if (j.contains("batch_b")) j.at("batch_b").get_to(c.batch_b);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("aug_rate")) j.at("aug_rate").get_to(c.aug_rate);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const DataConfig& c) {
    j = {{"root", c.root},
         {"frames_train", c.frames_train},
         {"frames_eval", c.frames_eval},
         {"real_frames_mult", c.real_frames_mult},
         {"split", c.split}};
}
inline void from_json(const nlohmann::json& j, DataConfig& c) {
    if (j.contains("root")) j.at("root").get_to(c.root);
    if (j.contains("frames_train")) j.at("frames_train").get_to(c.frames_train);
    if (j.contains("frames_eval")) j.at("frames_eval").get_to(c.frames_eval);
    if (j.contains("real_frames_mult")) j.at("real_frames_mult").get_to(c.real_frames_mult);
    if (j.contains("split")) j.at("split").get_to(c.split);
}

inline void to_json(nlohmann::json& j, const IoConfig& c) {
    j = {{"checkpoint_dir", c.checkpoint_dir}, {"metrics_dir", c.metrics_dir}};
}
inline void from_json(const nlohmann::json& j, IoConfig& c) {
    if (j.contains("checkpoint_dir")) j.at("checkpoint_dir").get_to(c.checkpoint_dir);
    if (j.contains("metrics_dir")) j.at("metrics_dir").get_to(c.metrics_dir);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"preset", c.preset}, {"model", c.model},   {"train", c.train},
         {"data", c.data},     {"io", c.io},         {"threads", c.threads}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    if (j.contains("preset")) {
        j.at("preset").get_to(c.preset);
        c.model = ModelConfig::preset(c.preset);
    }
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("data")) j.at("data").get_to(c.data);
    if (j.contains("io")) j.at("io").get_to(c.io);
    if (j.contains("threads")) j.at("threads").get_to(c.threads);
}

}  // namespace gcv
