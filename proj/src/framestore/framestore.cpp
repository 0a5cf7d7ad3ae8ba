#include "resmotion/framestore/framestore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "resmotion/core/errors.hpp"
#include "resmotion/util/binary_io.hpp"

namespace resmotion::framestore {

int FrameSource::num_classes() const {
  int k = 0;
  for (const auto& r : records()) k = std::max(k, r.label + 1);
  return k;
}

// ---- PNM -------------------------------------------------------------------

namespace {

struct PnmHeader {
  char kind = 0;  // '5' or '6'
  std::size_t width = 0, height = 0;
};

std::size_t read_pnm_number(std::istream& in, const fs::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  std::size_t value = 0;
  if (!(in >> value)) throw DataError("unreadable frame " + path.string() + ": bad header");
  return value;
}

PnmHeader parse_pnm_header(std::istream& in, const fs::path& path) {
  char magic[2] = {};
  if (!in.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw DataError("unreadable frame " + path.string() + ": not a binary PPM/PGM");
  }
  PnmHeader h;
  h.kind = magic[1];
  h.width = read_pnm_number(in, path);
  h.height = read_pnm_number(in, path);
  const std::size_t maxval = read_pnm_number(in, path);
  if (h.width == 0 || h.height == 0 || maxval != 255) {
    throw DataError("unreadable frame " + path.string() + ": need maxval 255 and nonzero size");
  }
  in.get();  // single whitespace before the raster
  return h;
}

}  // namespace

ImageHeader read_pnm_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("unreadable frame " + path.string());
  const PnmHeader h = parse_pnm_header(in, path);
  return {h.height, h.width};
}

Image8 read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("unreadable frame " + path.string());
  const PnmHeader h = parse_pnm_header(in, path);
  Image8 img{h.height, h.width, std::vector<std::uint8_t>(h.height * h.width * 3)};
  if (h.kind == '6') {
    if (!in.read(reinterpret_cast<char*>(img.rgb.data()),
                 static_cast<std::streamsize>(img.rgb.size()))) {
      throw DataError("unreadable frame " + path.string() + ": truncated raster");
    }
  } else {
    std::vector<std::uint8_t> gray(h.height * h.width);
    if (!in.read(reinterpret_cast<char*>(gray.data()), static_cast<std::streamsize>(gray.size()))) {
      throw DataError("unreadable frame " + path.string() + ": truncated raster");
    }
    for (std::size_t i = 0; i < gray.size(); ++i) {
      img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = gray[i];
    }
  }
  return img;
}

void write_ppm(const fs::path& path, const Image8& image) {
  if (image.rgb.size() != image.height * image.width * 3) {
    throw ShapeError("write_ppm: pixel buffer does not match " + std::to_string(image.height) +
                     "x" + std::to_string(image.width) + "x3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<fs::path> list_frames(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw DataError("missing directory " + directory.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(directory)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

// ---- Manifest ----------------------------------------------------------------

std::vector<VideoRecord> scan_dataset(const fs::path& root, const fs::path& manifest) {
  if (!fs::is_directory(root)) throw DataError("missing directory " + root.string());
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());

  std::vector<VideoRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) +
                      ": expected \"relative_path<TAB>label\"");
    }
    VideoRecord r;
    r.id = line.substr(0, tab);
    const std::string label_text = line.substr(tab + 1);
    std::size_t used = 0;
    try {
      r.label = std::stoi(label_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != label_text.size() || r.label < 0) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": bad label '" +
                      label_text + "'");
    }
    r.source = root / r.id;
    const auto frames = list_frames(r.source);
    if (frames.empty()) throw DataError("no frames in " + r.source.string());
    const ImageHeader first = read_pnm_header(frames.front());
    for (const auto& f : frames) {
      const ImageHeader h = read_pnm_header(f);
      if (h.height != first.height || h.width != first.width) {
        throw DataError("frame " + f.string() + " differs in size from the first frame");
      }
    }
    r.frame_count = frames.size();
    records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(),
            [](const VideoRecord& a, const VideoRecord& b) { return a.id < b.id; });

  std::set<int> labels;
  for (const auto& r : records) labels.insert(r.label);
  if (!labels.empty() && (*labels.begin() != 0 || *labels.rbegin() + 1 != static_cast<int>(labels.size()))) {
    throw DataError("non-contiguous labels in " + manifest.string());
  }
  return records;
}

namespace {

Tensor decode_frames(const std::vector<fs::path>& files, std::size_t begin, std::size_t end,
                     const std::string& id) {
  if (begin >= end || end > files.size()) {
    throw std::out_of_range("frame range [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of bounds for " + id + " with " +
                            std::to_string(files.size()) + " frames");
  }
  Tensor out;
  for (std::size_t f = begin; f < end; ++f) {
    const Image8 img = read_pnm(files[f]);
    if (f == begin) out = Tensor({end - begin, img.height, img.width, 3});
    if (img.height != out.dim(1) || img.width != out.dim(2)) {
      throw DataError("frame " + files[f].string() + " differs in size within " + id);
    }
    double* dst = out.data() + (f - begin) * img.rgb.size();
    for (std::size_t i = 0; i < img.rgb.size(); ++i) dst[i] = img.rgb[i] / 255.0;
  }
  return out;
}

}  // namespace

Tensor load_frames(const VideoRecord& record, std::size_t begin, std::size_t end) {
  return decode_frames(list_frames(record.source), begin, end, record.id);
}

DiskDataset::DiskDataset(const fs::path& root, const fs::path& manifest)
    : records_(scan_dataset(root, manifest)) {
  frames_.reserve(records_.size());
  for (const auto& r : records_) frames_.push_back(list_frames(r.source));
}

Tensor DiskDataset::load_frames(std::size_t index, std::size_t begin, std::size_t end) const {
  if (index >= records_.size()) throw std::out_of_range("video index out of range");
  return decode_frames(frames_[index], begin, end, records_[index].id);
}

// ---- Packed clips ------------------------------------------------------------

std::size_t pixel_size(PixelType type) {
  switch (type) {
    case PixelType::u8: return 1;
    case PixelType::f32: return 4;
  }
  throw FormatError("unknown dtype tag " + std::to_string(static_cast<std::uint32_t>(type)));
}

Tensor PackedClips::clip(std::size_t i) const {
  if (i >= num_clips()) throw std::out_of_range("clip index out of range");
  const std::size_t volume = shape.volume();
  Tensor out({shape.frames, shape.height, shape.width, shape.channels});
  if (dtype == PixelType::u8) {
    const std::uint8_t* src = payload.data() + i * volume;
    for (std::size_t j = 0; j < volume; ++j) out[j] = src[j] / 255.0;
  } else {
    const std::uint8_t* src = payload.data() + i * volume * 4;
    for (std::size_t j = 0; j < volume; ++j) {
      float v;
      std::memcpy(&v, src + 4 * j, 4);
      out[j] = v;
    }
  }
  return out;
}

PackedClips pack_clips(std::span<const Tensor> clips, std::span<const std::uint32_t> labels,
                       PixelType dtype) {
  if (clips.size() != labels.size()) {
    throw ShapeError("pack_clips: " + std::to_string(clips.size()) + " clips but " +
                     std::to_string(labels.size()) + " labels");
  }
  PackedClips packed;
  packed.dtype = dtype;
  packed.labels.assign(labels.begin(), labels.end());
  if (clips.empty()) return packed;
  const Shape& s = clips.front().shape();
  if (s.size() != 4) throw ShapeError("pack_clips: clips must be [T, H, W, C]");
  packed.shape = {static_cast<std::uint32_t>(s[0]), static_cast<std::uint32_t>(s[1]),
                  static_cast<std::uint32_t>(s[2]), static_cast<std::uint32_t>(s[3])};
  const std::size_t volume = packed.shape.volume();
  packed.payload.reserve(clips.size() * volume * pixel_size(dtype));
  for (const auto& c : clips) {
    if (c.shape() != s) throw ShapeError("pack_clips: clips must share one shape");
    for (double v : c.values()) {
      if (dtype == PixelType::u8) {
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        packed.payload.push_back(static_cast<std::uint8_t>(q));
      } else {
        const float f = static_cast<float>(v);
        std::uint8_t bytes[4];
        std::memcpy(bytes, &f, 4);
        packed.payload.insert(packed.payload.end(), bytes, bytes + 4);
      }
    }
  }
  return packed;
}

void write_packed(const PackedClips& clips, const fs::path& path) {
  const std::size_t expected = clips.num_clips() * clips.shape.volume() * pixel_size(clips.dtype);
  if (clips.payload.size() != expected) {
    throw ShapeError("write_packed: payload has " + std::to_string(clips.payload.size()) +
                     " bytes, expected " + std::to_string(expected));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::write_magic(out, "RMC1");
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clips.num_clips()));
  io::write_le(out, clips.shape.frames);
  io::write_le(out, clips.shape.height);
  io::write_le(out, clips.shape.width);
  io::write_le(out, clips.shape.channels);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clips.dtype));
  for (auto label : clips.labels) io::write_le(out, label);
  out.write(reinterpret_cast<const char*>(clips.payload.data()),
            static_cast<std::streamsize>(clips.payload.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

PackedClips read_packed(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::expect_magic(in, "RMC1");
  PackedClips clips;
  const auto n = io::read_le<std::uint32_t>(in, "num_clips");
  clips.shape.frames = io::read_le<std::uint32_t>(in, "T");
  clips.shape.height = io::read_le<std::uint32_t>(in, "H");
  clips.shape.width = io::read_le<std::uint32_t>(in, "W");
  clips.shape.channels = io::read_le<std::uint32_t>(in, "C");
  const auto tag = io::read_le<std::uint32_t>(in, "dtype");
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
  clips.dtype = static_cast<PixelType>(tag);

  const auto file_size = fs::file_size(path);
  const std::size_t payload = std::size_t{n} * clips.shape.volume() * pixel_size(clips.dtype);
  const std::size_t expected = kPackedHeaderBytes + 4 * std::size_t{n} + payload;
  if (file_size != expected) {
    throw FormatError(path.string() + ": file length " + std::to_string(file_size) +
                      " != expected " + std::to_string(expected) + " (truncated or corrupt)");
  }
  clips.labels.resize(n);
  for (auto& label : clips.labels) label = io::read_le<std::uint32_t>(in, "labels");
  clips.payload.resize(payload);
  if (payload && !in.read(reinterpret_cast<char*>(clips.payload.data()),
                          static_cast<std::streamsize>(payload))) {
    throw FormatError(path.string() + ": truncated payload");
  }
  return clips;
}

PackedClips read_packed(const fs::path& path, PixelType expected) {
  PackedClips clips = read_packed(path);
  if (clips.dtype != expected) {
    throw FormatError(path.string() + ": dtype mismatch (file has tag " +
                      std::to_string(static_cast<std::uint32_t>(clips.dtype)) + ", expected " +
                      std::to_string(static_cast<std::uint32_t>(expected)) + ")");
  }
  return clips;
}

}  // namespace resmotion::framestore
