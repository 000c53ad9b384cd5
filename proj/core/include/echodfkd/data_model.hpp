#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echodfkd/errors.hpp"
#include "echodfkd/tensor.hpp"

namespace echodfkd {

enum class ClipSource { REAL, SYNTHETIC, PHANTOM };
enum class Split { TRAIN, VAL, TEST };
enum class CorruptReason { VIDEO_CORRUPT, LABEL_CORRUPT, ED_ES_TOO_CLOSE };

std::string to_string(Split s);
Split split_from_string(const std::string& s);
std::string to_string(CorruptReason r);
CorruptReason corrupt_reason_from_string(const std::string& s);

// T x H x W grayscale frames, intensities in [0,1].
struct VideoClip {
    std::string id;
    Tensor<float> frames;  // n=T, c=1
    double fps = 0.0;
    ClipSource source = ClipSource::REAL;

    int t() const { return frames.n; }
    int height() const { return frames.h; }
    int width() const { return frames.w; }
    void validate() const;
};

struct BinaryMaskSequence {
    std::string clip_id;
    int t = 0, h = 0, w = 0;
    std::vector<uint8_t> masks;  // T*H*W, values 0/1

    uint8_t at(int ti, int y, int x) const {
        return masks[(static_cast<size_t>(ti) * h + y) * w + x];
    }
    uint8_t& at(int ti, int y, int x) {
        return masks[(static_cast<size_t>(ti) * h + y) * w + x];
    }
    std::vector<uint8_t> frame(int ti) const {
        auto b = masks.begin() + static_cast<size_t>(ti) * h * w;
        return std::vector<uint8_t>(b, b + static_cast<size_t>(h) * w);
    }
};

struct SoftMaskSequence {
    std::string clip_id;
    Tensor<float> masks;  // n=T, c=1, values in [0,1]

    BinaryMaskSequence threshold(float tau) const;
};

// One closed tracing: first chord is the principal axis, the rest cross it.
struct Chord {
    double x1, y1, x2, y2;
};
struct PolygonalTracing {
    int frame_index = 0;
    std::vector<Chord> chords;
    static constexpr int kCompleteChords = 21;
};

struct ClipLabels {
    int ed_frame = -1;
    int es_frame = -1;
    double ef = 0.0;  // percent
    std::vector<PolygonalTracing> tracings;
};

struct ManifestRecord {
    std::string clip_id;
    Split split = Split::TRAIN;
    double fps = 0.0;
    int num_frames = 0;
    std::optional<ClipLabels> labels;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::map<std::string, CorruptReason> corrupted;

    const ManifestRecord* find(const std::string& clip_id) const;
    std::vector<const ManifestRecord*> split_records(Split s) const;
    void validate() const;
};

// Single-frame boolean mask.
struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> px;

    uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
    uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
};

// Even-odd scanline fill sampled at pixel centers; boundary pixels count
// when their center lies inside the polygon.
BinaryMask rasterize_tracing(const PolygonalTracing& tracing, int height, int width);

int64_t mask_area(const BinaryMask& mask);
int64_t mask_area(const BinaryMaskSequence& masks, int frame);

// Morphology with a Chebyshev-disc (square) structuring element.
void dilate_chebyshev(const uint8_t* in, uint8_t* out, int h, int w, int radius);
void erode_chebyshev(const uint8_t* in, uint8_t* out, int h, int w, int radius);

// Keeps only the largest 4-connected component (empty input stays empty).
void largest_component(const uint8_t* in, uint8_t* out, int h, int w);

// CSV manifest: <stem>.csv (records) + <stem>.corrupted.csv, and
// <stem>.tracings.csv when any record carries tracings.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& stem);
DatasetManifest load_manifest(const std::filesystem::path& stem);

}  // namespace echodfkd
