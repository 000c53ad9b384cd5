#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "echodfkd/data_model.hpp"

namespace echodfkd {

// 8-bit grayscale PNG helpers (RGB input is averaged on read).
void write_png_gray8(const std::filesystem::path& path, int height, int width,
                     const std::vector<uint8_t>& pixels);
std::vector<uint8_t> read_png_gray8(const std::filesystem::path& path,
                                    int& height, int& width);

// Raw tensor blob `<stem>.bin` with JSON sidecar `<stem>.json`
// ({"shape":[T,H,W],"dtype":"u8"|"f32"}).
void save_raw_u8(const std::filesystem::path& stem, const std::vector<int>& shape,
                 const std::vector<uint8_t>& data);
void save_raw_f32(const std::filesystem::path& stem, const std::vector<int>& shape,
                  const std::vector<float>& data);
std::vector<uint8_t> load_raw_u8(const std::filesystem::path& stem,
                                 std::vector<int>& shape);
std::vector<float> load_raw_f32(const std::filesystem::path& stem,
                                std::vector<int>& shape);

// Clips live under <data_dir>/clips/ either as <id>.bin/<id>.json raw
// tensors or as a <id>/ directory of PNG frames; the loader auto-detects.
void save_clip(const VideoClip& clip, const std::filesystem::path& data_dir);
VideoClip load_clip(const std::filesystem::path& data_dir, const std::string& clip_id,
                    double fps, ClipSource source = ClipSource::REAL);

// Mask stores: one raw tensor per clip under the given directory.
void save_soft_masks(const SoftMaskSequence& masks, const std::filesystem::path& dir);
SoftMaskSequence load_soft_masks(const std::filesystem::path& dir,
                                 const std::string& clip_id);
bool soft_masks_exist(const std::filesystem::path& dir, const std::string& clip_id);
void save_binary_masks(const BinaryMaskSequence& masks,
                       const std::filesystem::path& dir);
BinaryMaskSequence load_binary_masks(const std::filesystem::path& dir,
                                     const std::string& clip_id);

}  // namespace echodfkd
