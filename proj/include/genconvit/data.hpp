#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace gcv::data {

namespace fs = std::filesystem;

enum class Split { train, valid, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        default: return "test";
    }
}

inline Split split_from(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    throw DataError("unknown split name: " + s);
}

constexpr int kLabelReal = 0;
constexpr int kLabelFake = 1;

// One frame image on disk.
struct SampleRecord {
    std::string path;
    int label = kLabelReal;
    std::string video_id;
    Split split = Split::train;
};

// One video directory with its frames in sorted order.
struct VideoRecord {
    std::string video_id;
    int label = kLabelReal;
    Split split = Split::train;
    std::string dir;
    std::vector<std::string> frames;
};

namespace detail {

inline u64 fnv1a64(u64 seed, const std::string& s) {
    u64 h = 14695981039346656037ull;
    for (int i = 0; i < 8; ++i) {
        h ^= (seed >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
    }
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline bool frame_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace detail

// Split by rank within a class whose videos are ordered by a seeded hash of
// the video id; the slice sizes honor the ratios to within one video.
inline Split assign_split(i64 rank, i64 n, const std::array<i64, 3>& ratios) {
    const double total = static_cast<double>(ratios[0] + ratios[1] + ratios[2]);
    const i64 n_train = std::llround(static_cast<double>(n * ratios[0]) / total);
    const i64 n_tv = std::llround(static_cast<double>(n * (ratios[0] + ratios[1])) / total);
    if (rank < n_train) return Split::train;
    if (rank < n_tv) return Split::valid;
    return Split::test;
}

// Deterministic split assignment for one class: videos are ranked by a seeded
// hash of their id, so the outcome is independent of input order. Returns one
// split per input id, aligned by index.
inline std::vector<Split> split_videos(const std::vector<std::string>& ids, u64 seed,
                                       const std::array<i64, 3>& ratios) {
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || ratios[0] + ratios[1] + ratios[2] <= 0)
        throw ConfigError("split ratios must be nonnegative with a positive sum");
    const i64 n = static_cast<i64>(ids.size());
    std::vector<i64> order(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](i64 a, i64 b) {
        const u64 ha = detail::fnv1a64(seed, ids[static_cast<size_t>(a)]);
        const u64 hb = detail::fnv1a64(seed, ids[static_cast<size_t>(b)]);
        return ha != hb ? ha < hb : ids[static_cast<size_t>(a)] < ids[static_cast<size_t>(b)];
    });
    std::vector<Split> out(static_cast<size_t>(n));
    for (i64 rank = 0; rank < n; ++rank)
        out[static_cast<size_t>(order[static_cast<size_t>(rank)])] = assign_split(rank, n, ratios);
    return out;
}

// Lists the frames of one video directory, sorted by filename.
inline std::vector<std::string> list_frames(const std::string& video_dir,
                                            std::vector<std::string>* warnings = nullptr) {
    if (!fs::is_directory(video_dir)) throw DataError("not a video directory: " + video_dir);
    std::vector<std::string> frames;
    for (const auto& e : fs::directory_iterator(video_dir)) {
        if (!e.is_regular_file()) continue;
        if (detail::frame_extension(e.path()))
            frames.push_back(e.path().string());
        else if (warnings)
            warnings->push_back("skipping non-image file: " + e.path().string());
    }
    std::sort(frames.begin(), frames.end());
    return frames;
}

// Walks root/{real,fake}/<video_id>/ and assigns splits per class. The label
// comes from the class directory alone, never from file names.
inline std::vector<VideoRecord> scan_videos(const std::string& root,
                                            const std::array<i64, 3>& ratios, u64 seed,
                                            std::vector<std::string>* warnings = nullptr) {
    if (!fs::is_directory(root)) throw DataError("dataset root does not exist: " + root);
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || ratios[0] + ratios[1] + ratios[2] <= 0)
        throw ConfigError("split ratios must be nonnegative with a positive sum");

    std::vector<VideoRecord> all;
    for (int label : {kLabelReal, kLabelFake}) {
        const fs::path cls = fs::path(root) / (label == kLabelReal ? "real" : "fake");
        if (!fs::is_directory(cls))
            throw DataError("dataset has no " +
                            std::string(label == kLabelReal ? "real" : "fake") +
                            " class directory: " + cls.string());

        std::vector<VideoRecord> vids;
        for (const auto& e : fs::directory_iterator(cls)) {
            if (!e.is_directory()) {
                if (warnings) warnings->push_back("skipping stray file: " + e.path().string());
                continue;
            }
            VideoRecord v;
            v.video_id = e.path().filename().string();
            v.label = label;
            v.dir = e.path().string();
            v.frames = list_frames(v.dir, warnings);
            if (v.frames.empty()) {
                if (warnings) warnings->push_back("skipping empty video: " + v.dir);
                continue;
            }
            vids.push_back(std::move(v));
        }
        if (vids.empty())
            throw DataError("dataset has no " +
                            std::string(label == kLabelReal ? "real" : "fake") + " videos");

        std::vector<std::string> ids;
        ids.reserve(vids.size());
        for (const auto& v : vids) ids.push_back(v.video_id);
        const std::vector<Split> splits = split_videos(ids, seed, ratios);
        for (size_t i = 0; i < vids.size(); ++i) vids[i].split = splits[i];
        for (auto& v : vids) all.push_back(std::move(v));
    }
    std::sort(all.begin(), all.end(), [](const VideoRecord& a, const VideoRecord& b) {
        return a.dir < b.dir;
    });
    return all;
}

inline std::vector<SampleRecord> flatten(const std::vector<VideoRecord>& videos) {
    std::vector<SampleRecord> out;
    for (const auto& v : videos)
        for (const auto& f : v.frames) out.push_back({f, v.label, v.video_id, v.split});
    return out;
}

inline std::vector<SampleRecord> scan_dataset(const std::string& root,
                                              const std::array<i64, 3>& ratios, u64 seed,
                                              std::vector<std::string>* warnings = nullptr) {
    return flatten(scan_videos(root, ratios, seed, warnings));
}

inline void write_manifest(const std::vector<SampleRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << "path\tlabel\tvideo_id\tsplit\n";
    for (const auto& r : records)
        out << r.path << '\t' << r.label << '\t' << r.video_id << '\t' << split_name(r.split)
            << '\n';
    if (!out) throw IoError("failed while writing manifest: " + path);
}

inline std::vector<SampleRecord> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "path\tlabel\tvideo_id\tsplit")
        throw DataError("manifest has a bad header: " + path);
    std::vector<SampleRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> col;
        size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            const size_t tab = line.find('\t', start);
            if (i < 3 && tab == std::string::npos)
                throw DataError("manifest line has too few columns: " + line);
            col[static_cast<size_t>(i)] =
                line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
            start = tab + 1;
        }
        SampleRecord r;
        r.path = col[0];
        r.label = std::stoi(col[1]);
        if (r.label != kLabelReal && r.label != kLabelFake)
            throw DataError("manifest label out of range: " + line);
        r.video_id = col[2];
        r.split = split_from(col[3]);
        records.push_back(std::move(r));
    }
    return records;
}

enum class FrameMode { uniform, first };

// Picks n frames from a sorted list. Uniform mode takes indices floor(i*len/n);
// if fewer than n frames exist, all of them are returned in order.
inline std::vector<std::string> sample_frames(const std::vector<std::string>& frames, i64 n,
                                              FrameMode mode = FrameMode::uniform) {
    if (frames.empty()) throw DataError("sample_frames: video has no frames");
    if (n <= 0) throw ConfigError("sample_frames: frame count must be positive");
    const i64 len = static_cast<i64>(frames.size());
    if (len <= n) return frames;
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) {
        const i64 idx = mode == FrameMode::uniform ? i * len / n : i;
        out.push_back(frames[static_cast<size_t>(idx)]);
    }
    return out;
}

inline std::vector<std::string> sample_frames_dir(const std::string& video_dir, i64 n,
                                                  FrameMode mode = FrameMode::uniform) {
    return sample_frames(list_frames(video_dir), n, mode);
}

// Resizes to out_size and maps 8-bit values through x/255 then (x - mean)/std.
inline Tensor<float> normalize(const Image& img, i64 out_size, float mean = 0.5f,
                               float std_ = 0.5f) {
    if (img.c != 3) throw DataError("normalize: expected an RGB image");
    if (img.w <= 0 || img.h <= 0) throw DataError("normalize: empty image");
    if (out_size <= 0) throw ConfigError("normalize: output size must be positive");

    Tensor<float> t = Tensor<float>::zeros({1, 3, img.h, img.w});
    float* d = t.store->data();
    for (i64 c = 0; c < 3; ++c)
        for (i64 y = 0; y < img.h; ++y)
            for (i64 x = 0; x < img.w; ++x)
                d[(c * img.h + y) * img.w + x] = static_cast<float>(img.at(x, y, c)) / 255.0f;
    if (img.h != out_size || img.w != out_size) t = resize_bilinear(t, out_size, out_size);

    for (auto& v : *t.store) v = (v - mean) / std_;
    t.shape = {3, out_size, out_size};
    return t;
}

// Inverse of normalize at the tensor's own resolution.
inline Image denormalize(const Tensor<float>& t, float mean = 0.5f, float std_ = 0.5f) {
    Shape s = t.shape;
    if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
    if (s.size() != 3 || s[0] != 3) throw DataError("denormalize: expected a (3, H, W) tensor");
    const i64 h = s[1], w = s[2];
    Image img(w, h, 3);
    const float* d = t.store->data();
    for (i64 c = 0; c < 3; ++c)
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x)
                img.at(x, y, c) =
                    clamp_u8((static_cast<double>(d[(c * h + y) * w + x]) * std_ + mean) * 255.0);
    return img;
}

// Stacks per-frame (3, S, S) tensors into a (B, 3, S, S) batch.
inline Tensor<float> stack_frames(const std::vector<Tensor<float>>& frames) {
    if (frames.empty()) throw DataError("stack_frames: no frames given");
    const Shape& s = frames.front().shape;
    if (s.size() != 3) throw ShapeError("stack_frames: expected (C, H, W) frames");
    Tensor<float> out = Tensor<float>::zeros({static_cast<i64>(frames.size()), s[0], s[1], s[2]});
    const i64 stride = s[0] * s[1] * s[2];
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].shape != s) throw ShapeError("stack_frames: mismatched frame shapes");
        std::copy(frames[i].store->begin(), frames[i].store->end(),
                  out.store->begin() + static_cast<i64>(i) * stride);
    }
    return out;
}

}  // namespace gcv::data
