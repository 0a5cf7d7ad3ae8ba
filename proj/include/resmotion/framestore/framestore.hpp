#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "resmotion/core/tensor.hpp"

namespace resmotion::framestore {

namespace fs = std::filesystem;

struct VideoRecord {
  std::string id;  // manifest-relative path
  int label = 0;
  std::size_t frame_count = 0;
  fs::path source;  // ordered frame directory
};

// Anything that can hand out frames of labeled videos: frame directories on
// disk or an in-memory synthetic dataset.
class FrameSource {
 public:
  virtual ~FrameSource() = default;

  virtual const std::vector<VideoRecord>& records() const = 0;

  // Frames [begin, end) of video `index` as [end - begin, H, W, 3] reals in
  // [0, 1], in temporal order. Throws std::out_of_range on a bad range.
  virtual Tensor load_frames(std::size_t index, std::size_t begin, std::size_t end) const = 0;

  std::size_t size() const { return records().size(); }
  int num_classes() const;
};

// 8-bit interleaved image as stored on disk.
struct Image8 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3
};

struct ImageHeader {
  std::size_t height = 0, width = 0;
};

// Binary PPM (P6) and PGM (P5, expanded to RGB) with maxval 255.
Image8 read_pnm(const fs::path& path);
ImageHeader read_pnm_header(const fs::path& path);
void write_ppm(const fs::path& path, const Image8& image);

// Frame files of a video directory (*.ppm, *.pgm) in lexicographic order.
std::vector<fs::path> list_frames(const fs::path& directory);

// Manifest lines are "relative_path<TAB>label_index"; blank lines and lines
// starting with '#' are skipped. Records come back sorted by id, and the
// labels must form the contiguous set 0..K-1.
std::vector<VideoRecord> scan_dataset(const fs::path& root, const fs::path& manifest);

Tensor load_frames(const VideoRecord& record, std::size_t begin, std::size_t end);

class DiskDataset final : public FrameSource {
 public:
  DiskDataset(const fs::path& root, const fs::path& manifest);

  const std::vector<VideoRecord>& records() const override { return records_; }
  Tensor load_frames(std::size_t index, std::size_t begin, std::size_t end) const override;

 private:
  std::vector<VideoRecord> records_;
  std::vector<std::vector<fs::path>> frames_;
};

// ---- Packed clip file ------------------------------------------------------
//
//   "RMC1"
//   u32 num_clips, T, H, W, C, dtype        (dtype: 0 = u8, 1 = f32)
//   u32 label[num_clips]
//   payload: clips in row-major (clip, T, H, W, C) order
//
// All integers and floats little-endian.

enum class PixelType : std::uint32_t { u8 = 0, f32 = 1 };

std::size_t pixel_size(PixelType type);

struct ClipShape {
  std::uint32_t frames = 0, height = 0, width = 0, channels = 0;
  std::size_t volume() const {
    return std::size_t{frames} * height * width * channels;
  }
  friend bool operator==(const ClipShape&, const ClipShape&) = default;
};

struct PackedClips {
  ClipShape shape;
  PixelType dtype = PixelType::u8;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint8_t> payload;  // raw little-endian pixel bytes

  std::size_t num_clips() const { return labels.size(); }
  // Clip `i` as [T, H, W, C] reals; u8 is scaled by 1/255.
  Tensor clip(std::size_t i) const;

  friend bool operator==(const PackedClips&, const PackedClips&) = default;
};

inline constexpr std::size_t kPackedHeaderBytes = 28;

// Encodes [T, H, W, C] clips of one shape. u8 stores round(255 * v) clamped
// to [0, 255].
PackedClips pack_clips(std::span<const Tensor> clips, std::span<const std::uint32_t> labels,
                       PixelType dtype);

void write_packed(const PackedClips& clips, const fs::path& path);
PackedClips read_packed(const fs::path& path);
// Same, but rejects a file whose dtype differs from `expected`.
PackedClips read_packed(const fs::path& path, PixelType expected);

}  // namespace resmotion::framestore
