#include "echodfkd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace echodfkd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_png_gray8(const fs::path& path, int height, int width,
                     const std::vector<uint8_t>& pixels) {
    if (pixels.size() != static_cast<size_t>(height) * width)
        throw ShapeError("pixel buffer does not match " + std::to_string(height) +
                         "x" + std::to_string(width));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failure: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(&pixels[static_cast<size_t>(y) * width]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png_gray8(const fs::path& path, int& height, int& width) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng read failure: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_expand(png);
    png_read_update_info(png, info);
    int channels = png_get_channels(png, info);
    std::vector<uint8_t> row(static_cast<size_t>(width) * channels);
    std::vector<uint8_t> out(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            if (channels == 1) {
                out[static_cast<size_t>(y) * width + x] = row[x];
            } else {
                int s = 0;
                for (int c = 0; c < channels; ++c) s += row[static_cast<size_t>(x) * channels + c];
                out[static_cast<size_t>(y) * width + x] =
                    static_cast<uint8_t>(s / channels);
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

// ---- raw tensor + sidecar ----

namespace {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void write_sidecar(const fs::path& stem, const std::vector<int>& shape,
                   const std::string& dtype) {
    json j;
    j["shape"] = shape;
    j["dtype"] = dtype;
    fs::path p = stem;
    p += ".json";
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump() << '\n';
}

std::vector<int> read_sidecar(const fs::path& stem, const std::string& want_dtype) {
    fs::path p = stem;
    p += ".json";
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    json j = json::parse(in);
    if (j.at("dtype").get<std::string>() != want_dtype)
        throw IoError(p.string() + ": expected dtype " + want_dtype);
    return j.at("shape").get<std::vector<int>>();
}

template <typename T>
void write_blob(const fs::path& stem, const T* data, size_t n) {
    fs::path p = stem;
    p += ".bin";
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
std::vector<T> read_blob(const fs::path& stem, size_t n) {
    fs::path p = stem;
    p += ".bin";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::vector<T> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(T)));
    if (static_cast<size_t>(in.gcount()) != n * sizeof(T))
        throw IoError(p.string() + ": truncated blob");
    return data;
}

}  // namespace

void save_raw_u8(const fs::path& stem, const std::vector<int>& shape,
                 const std::vector<uint8_t>& data) {
    if (data.size() != shape_numel(shape)) throw ShapeError("blob size vs shape");
    fs::create_directories(stem.parent_path());
    write_blob(stem, data.data(), data.size());
    write_sidecar(stem, shape, "u8");
}

void save_raw_f32(const fs::path& stem, const std::vector<int>& shape,
                  const std::vector<float>& data) {
    if (data.size() != shape_numel(shape)) throw ShapeError("blob size vs shape");
    fs::create_directories(stem.parent_path());
    write_blob(stem, data.data(), data.size());
    write_sidecar(stem, shape, "f32");
}

std::vector<uint8_t> load_raw_u8(const fs::path& stem, std::vector<int>& shape) {
    shape = read_sidecar(stem, "u8");
    return read_blob<uint8_t>(stem, shape_numel(shape));
}

std::vector<float> load_raw_f32(const fs::path& stem, std::vector<int>& shape) {
    shape = read_sidecar(stem, "f32");
    return read_blob<float>(stem, shape_numel(shape));
}

// ---- clips ----

void save_clip(const VideoClip& clip, const fs::path& data_dir) {
    clip.validate();
    std::vector<uint8_t> u8(clip.frames.size());
    for (size_t i = 0; i < u8.size(); ++i)
        u8[i] = static_cast<uint8_t>(std::lround(clip.frames.v[i] * 255.0f));
    save_raw_u8(data_dir / "clips" / clip.id,
                {clip.t(), clip.height(), clip.width()}, u8);
}

VideoClip load_clip(const fs::path& data_dir, const std::string& clip_id,
                    double fps, ClipSource source) {
    VideoClip clip;
    clip.id = clip_id;
    clip.fps = fps;
    clip.source = source;

    fs::path stem = data_dir / "clips" / clip_id;
    fs::path sidecar = stem;
    sidecar += ".json";
    if (fs::exists(sidecar)) {
        std::vector<int> shape;
        std::vector<uint8_t> u8 = load_raw_u8(stem, shape);
        if (shape.size() != 3) throw IoError(clip_id + ": expected [T,H,W] shape");
        clip.frames = Tensor<float>(shape[0], 1, shape[1], shape[2]);
        for (size_t i = 0; i < u8.size(); ++i)
            clip.frames.v[i] = static_cast<float>(u8[i]) / 255.0f;
    } else if (fs::is_directory(stem)) {
        std::vector<fs::path> frames;
        for (const auto& e : fs::directory_iterator(stem))
            if (e.path().extension() == ".png") frames.push_back(e.path());
        if (frames.empty()) throw IoError(clip_id + ": no PNG frames");
        std::sort(frames.begin(), frames.end());
        int h = 0, w = 0;
        std::vector<uint8_t> first = read_png_gray8(frames[0], h, w);
        clip.frames = Tensor<float>(static_cast<int>(frames.size()), 1, h, w);
        for (size_t t = 0; t < frames.size(); ++t) {
            int fh = 0, fw = 0;
            std::vector<uint8_t> px =
                t == 0 ? first : read_png_gray8(frames[t], fh, fw);
            if (t != 0 && (fh != h || fw != w))
                throw ShapeError(clip_id + ": inconsistent frame sizes");
            for (size_t i = 0; i < px.size(); ++i)
                clip.frames.v[t * px.size() + i] = static_cast<float>(px[i]) / 255.0f;
        }
    } else {
        throw IoError("clip not found: " + stem.string());
    }
    clip.validate();
    return clip;
}

// ---- mask stores ----

void save_soft_masks(const SoftMaskSequence& m, const fs::path& dir) {
    save_raw_f32(dir / m.clip_id, {m.masks.n, m.masks.h, m.masks.w}, m.masks.v);
}

bool soft_masks_exist(const fs::path& dir, const std::string& clip_id) {
    fs::path p = dir / clip_id;
    p += ".json";
    return fs::exists(p);
}

SoftMaskSequence load_soft_masks(const fs::path& dir, const std::string& clip_id) {
    std::vector<int> shape;
    std::vector<float> data = load_raw_f32(dir / clip_id, shape);
    if (shape.size() != 3) throw IoError(clip_id + ": expected [T,H,W] masks");
    SoftMaskSequence m;
    m.clip_id = clip_id;
    m.masks = Tensor<float>(shape[0], 1, shape[1], shape[2]);
    m.masks.v = std::move(data);
    return m;
}

void save_binary_masks(const BinaryMaskSequence& m, const fs::path& dir) {
    save_raw_u8(dir / m.clip_id, {m.t, m.h, m.w}, m.masks);
}

BinaryMaskSequence load_binary_masks(const fs::path& dir, const std::string& clip_id) {
    std::vector<int> shape;
    std::vector<uint8_t> data = load_raw_u8(dir / clip_id, shape);
    if (shape.size() != 3) throw IoError(clip_id + ": expected [T,H,W] masks");
    BinaryMaskSequence m;
    m.clip_id = clip_id;
    m.t = shape[0];
    m.h = shape[1];
    m.w = shape[2];
    m.masks = std::move(data);
    return m;
}

}  // namespace echodfkd
