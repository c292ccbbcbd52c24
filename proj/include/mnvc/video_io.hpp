#pragma once

// RGB24 frames: PPM (P6, one or more images per file, or a directory of
// .ppm files) and headerless raw RGB24 streams.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mnvc/codec_config.hpp"
#include "mnvc/error.hpp"
#include "mnvc/qtensor.hpp"

namespace mnvc {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  bool operator==(const Image&) const = default;

  static Image blank(int w, int h) {
    require(w >= 0 && h >= 0, ErrorKind::Shape, "negative image dims");
    return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 0)};
  }
  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

struct RawVideo {
  int width = 0;
  int height = 0;
  double fps = 30.0;  // metadata only
  std::vector<Image> frames;
};

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Right/bottom edge replication up to the next multiples of m.
inline Image pad_to_multiple(const Image& in, int m = 64) {
  require(m >= 1, ErrorKind::Config, "pad multiple must be >= 1");
  require(in.width > 0 && in.height > 0, ErrorKind::Shape, "cannot pad an empty image");
  Image out = Image::blank(round_up(in.width, m), round_up(in.height, m));
  for (int y = 0; y < out.height; ++y) {
    const int sy = std::min(y, in.height - 1);
    for (int x = 0; x < out.width; ++x) {
      const int sx = std::min(x, in.width - 1);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

inline Image crop_to_display(const Image& in, int width, int height) {
  if (width <= 0 || height <= 0 || width > in.width || height > in.height)
    fail(ErrorKind::Shape, "display dims " + std::to_string(width) + "x" + std::to_string(height) +
                               " do not fit inside " + std::to_string(in.width) + "x" + std::to_string(in.height));
  Image out = Image::blank(width, height);
  for (int y = 0; y < height; ++y)
    std::copy_n(in.rgb.begin() + static_cast<std::ptrdiff_t>(y) * in.width * 3, width * 3,
                out.rgb.begin() + static_cast<std::ptrdiff_t>(y) * width * 3);
  return out;
}

// Planar frame tensor on the frame grid (pixel - 128).
inline QuantTensor to_tensor(const Image& img) {
  QuantTensor t = QuantTensor::filled(3, img.height, img.width, kind_params(TensorKind::Frame));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = static_cast<std::int8_t>(img.at(y, x, c) - 128);
  return t;
}

inline Image to_image(const QuantTensor& t) {
  require(t.channels == 3, ErrorKind::Shape, "frame tensors have 3 channels");
  require(t.params == kind_params(TensorKind::Frame), ErrorKind::Shape, "tensor is not on the frame grid");
  Image img = Image::blank(t.width, t.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) img.at(y, x, c) = static_cast<std::uint8_t>(t.at(c, y, x) + 128);
  return img;
}

// ---- PPM ----

namespace detail {

class PpmScanner {
 public:
  explicit PpmScanner(const std::vector<std::uint8_t>& b) : b_(b) {}

  bool at_end() {
    skip_space();
    return pos_ >= b_.size();
  }

  Image next() {
    skip_space();
    if (pos_ + 2 > b_.size() || b_[pos_] != 'P' || b_[pos_ + 1] != '6')
      fail(ErrorKind::Format, "not a binary PPM (P6) image at byte " + std::to_string(pos_));
    pos_ += 2;
    const long w = number(), h = number(), maxval = number();
    if (maxval != 255) fail(ErrorKind::Format, "only 8-bit PPM (maxval 255) is supported");
    if (w <= 0 || h <= 0 || w > 65535 || h > 65535) fail(ErrorKind::Format, "PPM dims out of range");
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail(ErrorKind::Format, "malformed PPM header");
    ++pos_;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (b_.size() - pos_ < n) fail(ErrorKind::Truncated, "PPM pixel data is truncated");
    Image img{static_cast<int>(w), static_cast<int>(h),
              std::vector<std::uint8_t>(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                        b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n))};
    pos_ += n;
    return img;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  long number() {
    skip_space();
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_]) && digits < 9) {
      v = v * 10 + (b_[pos_++] - '0');
      ++digits;
    }
    if (digits == 0) fail(ErrorKind::Format, "malformed PPM header");
    return v;
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline void check_same_dims(RawVideo& v, const Image& img) {
  if (v.frames.empty()) {
    v.width = img.width;
    v.height = img.height;
  } else if (img.width != v.width || img.height != v.height) {
    fail(ErrorKind::Format, "all frames must have the same dims");
  }
}

}  // namespace detail

inline std::vector<Image> parse_ppm(const std::vector<std::uint8_t>& bytes) {
  detail::PpmScanner s(bytes);
  std::vector<Image> out;
  while (!s.at_end()) out.push_back(s.next());
  return out;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string head = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

inline std::vector<Image> parse_raw_rgb(const std::vector<std::uint8_t>& bytes, int width, int height) {
  require(width > 0 && height > 0, ErrorKind::Config, "raw RGB24 input needs --width and --height");
  const std::size_t frame = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() % frame != 0)
    fail(ErrorKind::Format, "raw RGB24 size " + std::to_string(bytes.size()) + " is not a multiple of the frame size " +
                                std::to_string(frame));
  std::vector<Image> out;
  for (std::size_t off = 0; off < bytes.size(); off += frame)
    out.push_back({width, height,
                   std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                                             bytes.begin() + static_cast<std::ptrdiff_t>(off + frame))});
  return out;
}

// A directory is read as its *.ppm files in name order; a *.ppm file may
// hold several images; anything else is raw RGB24 of width x height.
inline RawVideo load_video(const std::string& path, int width = 0, int height = 0) {
  namespace fs = std::filesystem;
  RawVideo v;
  std::vector<Image> frames;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto imgs = parse_ppm(detail::slurp(f.string()));
      frames.insert(frames.end(), imgs.begin(), imgs.end());
    }
  } else if (detail::has_suffix(path, ".ppm")) {
    frames = parse_ppm(detail::slurp(path));
  } else {
    frames = parse_raw_rgb(detail::slurp(path), width, height);
  }
  for (auto& f : frames) {
    detail::check_same_dims(v, f);
    v.frames.push_back(std::move(f));
  }
  if ((width > 0 && v.width != width) || (height > 0 && v.height != height))
    fail(ErrorKind::Format, "input frames are " + std::to_string(v.width) + "x" + std::to_string(v.height) +
                                ", expected " + std::to_string(width) + "x" + std::to_string(height));
  return v;
}

// Directory (existing, or path ending in '/'): frame_00000.ppm, ...;
// *.ppm: one multi-image file; anything else: raw RGB24.
inline void save_video(const std::string& path, const RawVideo& v) {
  namespace fs = std::filesystem;
  auto write = [](const std::string& p, const std::vector<std::uint8_t>& b, std::ios::openmode mode) {
    std::ofstream f(p, std::ios::binary | mode);
    if (!f) fail(ErrorKind::Io, "cannot open " + p + " for writing");
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) fail(ErrorKind::Io, "write failed: " + p);
  };
  if (fs::is_directory(path) || detail::has_suffix(path, "/")) {
    fs::create_directories(path);
    for (std::size_t i = 0; i < v.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.ppm", i);
      write((fs::path(path) / name).string(), encode_ppm(v.frames[i]), std::ios::trunc);
    }
    return;
  }
  std::vector<std::uint8_t> all;
  for (const auto& f : v.frames) {
    auto b = detail::has_suffix(path, ".ppm") ? encode_ppm(f) : f.rgb;
    all.insert(all.end(), b.begin(), b.end());
  }
  write(path, all, std::ios::trunc);
}

}  // namespace mnvc
