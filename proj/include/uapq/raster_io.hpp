#pragma once

// File formats: 8-bit PNG, YUV4MPEG2 video, and the binary "UAPP"
// perturbation container.
//
// UAPP layout (little-endian):
//   "UAPP" | u32 version=1 | u32 tile_height | u32 tile_width | u32 channels
//   | f32 clip_bound | f32 data[tile_height * tile_width * channels]
//
// Y4M frames are converted to RGB with full-range BT.601:
//   R = Y + 1.402 (Cr - 128)
//   G = Y - 0.344136 (Cb - 128) - 0.714136 (Cr - 128)
//   B = Y + 1.772 (Cb - 128)
// and back with
//   Y  =       0.299 R    + 0.587 G    + 0.114 B
//   Cb = 128 - 0.168736 R - 0.331264 G + 0.5 B
//   Cr = 128 + 0.5 R      - 0.418688 G - 0.081312 B

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uapq/error.hpp"
#include "uapq/image.hpp"

namespace uapq::io {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string(), 0);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string(), bytes.size());
}

// 8-bit quantisation, round half away from zero.
inline std::uint8_t to_u8(double v) {
  const double s = std::round(std::min(1.0, std::max(0.0, v)) * 255.0);
  return static_cast<std::uint8_t>(s);
}
inline double from_u8(std::uint8_t v) { return static_cast<double>(v) / 255.0; }

// ---------------------------------------------------------------------------
// UAPP

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(Bytes& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const Bytes& b) : bytes_(b) {}
  std::size_t offset() const { return pos_; }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

 private:
  const Bytes& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::array<char, 4> kUappMagic{'U', 'A', 'P', 'P'};
inline constexpr std::uint32_t kUappVersion = 1;

inline Bytes encode_perturbation(const Perturbation& p) {
  const Shape& s = p.shape();
  Bytes out;
  out.reserve(24 + 4 * s.size());
  out.insert(out.end(), kUappMagic.begin(), kUappMagic.end());
  detail::put_u32(out, kUappVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(s.height));
  detail::put_u32(out, static_cast<std::uint32_t>(s.width));
  detail::put_u32(out, static_cast<std::uint32_t>(s.channels));
  detail::put_f32(out, static_cast<float>(p.clip_bound()));
  for (double v : p.tile().values()) detail::put_f32(out, static_cast<float>(v));
  return out;
}

inline Perturbation decode_perturbation(const Bytes& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kUappMagic.data(), 4) != 0) {
    throw FormatError("missing UAPP magic", 0);
  }
  detail::Reader r(bytes);
  r.need(4, "magic");
  (void)r.u32("magic");
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kUappVersion) throw FormatError("unsupported UAPP version", version_at);
  const std::size_t dims_at = r.offset();
  const Shape shape{r.u32("tile_height"), r.u32("tile_width"), r.u32("channels")};
  if (shape.size() == 0) throw FormatError("zero-sized perturbation tile", dims_at);
  const std::size_t clip_at = r.offset();
  const double clip = r.f32("clip_bound");
  if (!(clip > 0.0) || !std::isfinite(clip)) throw FormatError("clip bound must be positive", clip_at);
  r.need(4 * shape.size(), "perturbation payload");
  std::vector<double> data(shape.size());
  for (auto& v : data) {
    const std::size_t at = r.offset();
    v = r.f32("perturbation payload");
    if (!(std::abs(v) <= clip)) throw FormatError("perturbation value outside clip bound", at);
  }
  if (r.offset() != bytes.size()) throw FormatError("trailing bytes after UAPP payload", r.offset());
  return Perturbation(Field(shape, std::move(data)), clip);
}

inline void write_perturbation(const std::filesystem::path& path, const Perturbation& p) {
  write_file(path, encode_perturbation(p));
}
inline Perturbation read_perturbation(const std::filesystem::path& path) {
  try {
    return decode_perturbation(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

// ---------------------------------------------------------------------------
// PNG

inline constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

inline ImageTensor decode_png(const Bytes& bytes) {
  for (std::size_t i = 0; i < kPngSignature.size(); ++i) {
    if (i >= bytes.size() || bytes[i] != kPngSignature[i]) throw FormatError("bad PNG signature", i);
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG header: ") + image.message, kPngSignature.size());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG data: " + msg, bytes.size());
  }
  Field f(Shape{image.height, image.width, channels});
  for (std::size_t i = 0; i < buf.size(); ++i) f.values()[i] = from_u8(buf[i]);
  return ImageTensor::from_field(std::move(f));
}

inline Bytes encode_png(const ImageTensor& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(img.values()[i]);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode: ") + image.message, 0);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode: ") + image.message, 0);
  }
  out.resize(size);
  return out;
}

inline ImageTensor read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}
inline void write_png(const std::filesystem::path& path, const ImageTensor& img) { write_file(path, encode_png(img)); }

// ---------------------------------------------------------------------------
// Y4M

enum class Chroma { c420, c444, mono };

struct Y4mHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint64_t rate_num = 25;
  std::uint64_t rate_den = 1;
  Chroma chroma = Chroma::c420;
};

namespace detail {

inline std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::round(std::min(255.0, std::max(0.0, v)))); }

inline std::size_t chroma_w(const Y4mHeader& h) { return h.chroma == Chroma::c420 ? (h.width + 1) / 2 : h.width; }
inline std::size_t chroma_h(const Y4mHeader& h) { return h.chroma == Chroma::c420 ? (h.height + 1) / 2 : h.height; }
inline std::size_t frame_bytes(const Y4mHeader& h) {
  const std::size_t luma = h.width * h.height;
  return h.chroma == Chroma::mono ? luma : luma + 2 * chroma_w(h) * chroma_h(h);
}

inline void rational_rate(double rate, std::uint64_t& num, std::uint64_t& den) {
  for (std::uint64_t d : {1ULL, 1001ULL, 1000ULL, 1000000ULL}) {
    const double n = rate * static_cast<double>(d);
    if (std::abs(n - std::round(n)) < 1e-6) {
      num = static_cast<std::uint64_t>(std::llround(n));
      den = d;
      return;
    }
  }
  num = static_cast<std::uint64_t>(std::llround(rate * 1000000.0));
  den = 1000000;
}

}  // namespace detail

inline Bytes encode_y4m(const VideoFrames& video, Chroma chroma = Chroma::c444) {
  video.validate();
  Y4mHeader h;
  h.width = video.shape().width;
  h.height = video.shape().height;
  h.chroma = video.shape().channels == 1 ? Chroma::mono : chroma;
  detail::rational_rate(video.frame_rate, h.rate_num, h.rate_den);

  std::ostringstream hdr;
  hdr << "YUV4MPEG2 W" << h.width << " H" << h.height << " F" << h.rate_num << ":" << h.rate_den << " Ip A1:1 C"
      << (h.chroma == Chroma::c420 ? "420jpeg" : h.chroma == Chroma::c444 ? "444" : "mono") << "\n";
  const std::string header = hdr.str();
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + video.frames.size() * (6 + detail::frame_bytes(h)));

  const std::size_t cw = detail::chroma_w(h), chh = detail::chroma_h(h);
  std::vector<double> y(h.width * h.height), cb(y.size()), cr(y.size());
  for (const auto& frame : video.frames) {
    static constexpr std::string_view kFrame = "FRAME\n";
    out.insert(out.end(), kFrame.begin(), kFrame.end());
    if (h.chroma == Chroma::mono) {
      for (double v : frame.values()) out.push_back(to_u8(v));
      continue;
    }
    for (std::size_t r = 0; r < h.height; ++r) {
      for (std::size_t c = 0; c < h.width; ++c) {
        const double R = frame.at(r, c, 0) * 255.0, G = frame.at(r, c, 1) * 255.0, B = frame.at(r, c, 2) * 255.0;
        const std::size_t i = r * h.width + c;
        y[i] = 0.299 * R + 0.587 * G + 0.114 * B;
        cb[i] = 128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B;
        cr[i] = 128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B;
      }
    }
    for (double v : y) out.push_back(detail::clamp_byte(v));
    for (const auto* plane : {&cb, &cr}) {
      for (std::size_t r = 0; r < chh; ++r) {
        for (std::size_t c = 0; c < cw; ++c) {
          if (h.chroma == Chroma::c444) {
            out.push_back(detail::clamp_byte((*plane)[r * h.width + c]));
            continue;
          }
          double acc = 0.0;
          int n = 0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t yy = 2 * r + dy, xx = 2 * c + dx;
              if (yy < h.height && xx < h.width) {
                acc += (*plane)[yy * h.width + xx];
                ++n;
              }
            }
          }
          out.push_back(detail::clamp_byte(acc / n));
        }
      }
    }
  }
  return out;
}

inline Y4mHeader parse_y4m_header(const Bytes& bytes, std::size_t& pos) {
  static constexpr std::string_view kMagic = "YUV4MPEG2 ";
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (i >= bytes.size() || bytes[i] != static_cast<std::uint8_t>(kMagic[i])) throw FormatError("bad Y4M magic", i);
  }
  pos = kMagic.size();
  Y4mHeader h;
  bool have_w = false, have_h = false;
  while (true) {
    if (pos >= bytes.size()) throw FormatError("unterminated Y4M header", pos);
    if (bytes[pos] == '\n') {
      ++pos;
      break;
    }
    if (bytes[pos] == ' ') {
      ++pos;
      continue;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != ' ' && bytes[pos] != '\n') ++pos;
    const std::string token(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                            bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    const std::string value = token.substr(1);
    try {
      switch (token[0]) {
        case 'W': h.width = std::stoul(value); have_w = true; break;
        case 'H': h.height = std::stoul(value); have_h = true; break;
        case 'F': {
          const auto colon = value.find(':');
          if (colon == std::string::npos) throw FormatError("bad Y4M frame rate", start);
          h.rate_num = std::stoull(value.substr(0, colon));
          h.rate_den = std::stoull(value.substr(colon + 1));
          if (h.rate_num == 0 || h.rate_den == 0) throw FormatError("zero Y4M frame rate", start);
          break;
        }
        case 'C':
          if (value.rfind("420", 0) == 0) h.chroma = Chroma::c420;
          else if (value == "444") h.chroma = Chroma::c444;
          else if (value == "mono") h.chroma = Chroma::mono;
          else throw FormatError("unsupported Y4M colourspace C" + value, start);
          break;
        case 'I':
          if (value != "p" && value != "?") throw FormatError("interlaced Y4M not supported", start);
          break;
        default: break;  // A, X and unknown tags are ignored
      }
    } catch (const std::logic_error&) {
      throw FormatError("bad Y4M header token " + token, start);
    }
  }
  if (!have_w || !have_h || h.width == 0 || h.height == 0) throw FormatError("Y4M header lacks W/H", pos);
  return h;
}

inline VideoFrames decode_y4m(const Bytes& bytes) {
  std::size_t pos = 0;
  const Y4mHeader h = parse_y4m_header(bytes, pos);
  const std::size_t cw = detail::chroma_w(h), chh = detail::chroma_h(h);
  const std::size_t luma = h.width * h.height, chroma = cw * chh;
  const std::size_t channels = h.chroma == Chroma::mono ? 1 : 3;

  std::vector<ImageTensor> frames;
  while (pos < bytes.size()) {
    static constexpr std::string_view kFrame = "FRAME";
    for (std::size_t i = 0; i < kFrame.size(); ++i) {
      if (pos + i >= bytes.size() || bytes[pos + i] != static_cast<std::uint8_t>(kFrame[i])) {
        throw FormatError("expected FRAME marker", pos + i);
      }
    }
    pos += kFrame.size();
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw FormatError("unterminated FRAME header", pos);
    ++pos;
    if (bytes.size() - pos < detail::frame_bytes(h)) throw FormatError("truncated Y4M frame", bytes.size());
    const std::uint8_t* yp = &bytes[pos];
    const std::uint8_t* cbp = yp + luma;
    const std::uint8_t* crp = cbp + chroma;
    Field f(Shape{h.height, h.width, channels});
    for (std::size_t r = 0; r < h.height; ++r) {
      for (std::size_t c = 0; c < h.width; ++c) {
        const double Y = yp[r * h.width + c];
        if (channels == 1) {
          f.at(r, c, 0) = Y / 255.0;
          continue;
        }
        const std::size_t ci = h.chroma == Chroma::c420 ? (r / 2) * cw + c / 2 : r * cw + c;
        const double Cb = cbp[ci] - 128.0, Cr = crp[ci] - 128.0;
        f.at(r, c, 0) = std::min(255.0, std::max(0.0, Y + 1.402 * Cr)) / 255.0;
        f.at(r, c, 1) = std::min(255.0, std::max(0.0, Y - 0.344136 * Cb - 0.714136 * Cr)) / 255.0;
        f.at(r, c, 2) = std::min(255.0, std::max(0.0, Y + 1.772 * Cb)) / 255.0;
      }
    }
    frames.push_back(ImageTensor::from_field(std::move(f)));
    pos += detail::frame_bytes(h);
  }
  if (frames.empty()) throw FormatError("Y4M stream has no frames", pos);
  return VideoFrames(std::move(frames), static_cast<double>(h.rate_num) / static_cast<double>(h.rate_den));
}

inline VideoFrames read_y4m(const std::filesystem::path& path) {
  try {
    return decode_y4m(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}
inline void write_y4m(const std::filesystem::path& path, const VideoFrames& v, Chroma chroma = Chroma::c444) {
  write_file(path, encode_y4m(v, chroma));
}

}  // namespace uapq::io
