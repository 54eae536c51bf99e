#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "uapq/attack.hpp"
#include "uapq/error.hpp"
#include "uapq/image.hpp"
#include "uapq/raster_io.hpp"

namespace uapq {

enum class CodecKind { mock, external };

struct CodecSpec {
  CodecKind kind = CodecKind::mock;
  double quality = 1.0;             // mock only, in (0, 1]
  std::string encode_template;      // external: {input} {output} {bitrate}
  std::string decode_template = "cp {input} {output}";  // external: {input} {output}
  std::string container_ext = "mp4";
  double target_bitrate = 0.0;      // external, bits/second

  static CodecSpec mock(double q) {
    CodecSpec s;
    s.quality = q;
    return s;
  }
  static CodecSpec external(std::string encode, double bitrate, std::string decode = "cp {input} {output}") {
    CodecSpec s;
    s.kind = CodecKind::external;
    s.encode_template = std::move(encode);
    s.decode_template = std::move(decode);
    s.target_bitrate = bitrate;
    return s;
  }

  void validate() const {
    if (kind == CodecKind::mock) {
      if (!(quality > 0.0 && quality <= 1.0)) throw ParameterError("mock codec quality must lie in (0, 1]");
      return;
    }
    for (const char* ph : {"{input}", "{output}", "{bitrate}"}) {
      if (encode_template.find(ph) == std::string::npos) {
        throw ParameterError(std::string("encode template is missing the ") + ph + " placeholder");
      }
    }
    for (const char* ph : {"{input}", "{output}"}) {
      if (decode_template.find(ph) == std::string::npos) {
        throw ParameterError(std::string("decode template is missing the ") + ph + " placeholder");
      }
    }
    if (!(target_bitrate > 0.0)) throw ParameterError("external codec target bitrate must be > 0");
  }

  // Stable identifier; also the cache key component for a rate point.
  std::string label() const {
    if (kind == CodecKind::mock) return "mock:q=" + format_real(quality);
    return "external:" + format_real(target_bitrate) + ":" + encode_template + "|" + decode_template;
  }
};

struct CompressedResult {
  VideoFrames video;
  double measured_bitrate = 0.0;
  std::string codec_echo;
};

namespace detail {

inline const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    for (int k = 0; k < 8; ++k) {
      const double alpha = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) c[k * 8 + n] = alpha * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
    }
    return c;
  }();
  return m;
}

// out = C * in * C^T (forward) or C^T * in * C (inverse).
inline void dct8x8(const double* in, double* out, bool inverse) {
  const auto& c = dct_matrix();
  double tmp[64];
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += (inverse ? c[k * 8 + i] : c[i * 8 + k]) * in[k * 8 + j];
      tmp[i * 8 + j] = acc;
    }
  }
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[i * 8 + k] * (inverse ? c[k * 8 + j] : c[j * 8 + k]);
      out[i * 8 + j] = acc;
    }
  }
}

inline double shannon_entropy_bits(const std::unordered_map<std::int64_t, std::uint64_t>& hist, std::uint64_t total) {
  // Sort counts so the floating-point sum does not depend on hash order.
  std::vector<std::uint64_t> counts;
  counts.reserve(hist.size());
  for (const auto& [sym, n] : hist) counts.push_back(n);
  std::sort(counts.begin(), counts.end());
  double h = 0.0;
  for (auto n : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace detail

inline constexpr double kMockStepMin = 1.0 / 255.0;
inline constexpr double kMockStepMax = 0.25;

inline double mock_quant_step(double q) { return (1.0 - q) * kMockStepMax + q * kMockStepMin; }

// Per frame and channel: 8x8 orthonormal DCT-II over an edge-replicated,
// block-aligned plane, uniform quantisation, reconstruction, crop, clamp.
// Bitrate = empirical entropy of the quantised coefficients (bits/symbol)
// x symbols per frame x frame rate, floored at one bit per frame.
inline CompressedResult mock_encode_decode(const VideoFrames& v, double q) {
  CodecSpec::mock(q).validate();
  v.validate();
  const double step = mock_quant_step(q);
  const Shape s = v.shape();
  const std::size_t ph = (s.height + 7) / 8 * 8, pw = (s.width + 7) / 8 * 8;

  std::unordered_map<std::int64_t, std::uint64_t> hist;
  std::uint64_t total = 0;
  std::vector<ImageTensor> out_frames;
  out_frames.reserve(v.frames.size());
  std::vector<double> plane(ph * pw), recon(ph * pw);
  double block[64], coef[64];

  for (const auto& frame : v.frames) {
    Field out(s);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < ph; ++y) {
        for (std::size_t x = 0; x < pw; ++x) {
          plane[y * pw + x] = frame.at(std::min(y, s.height - 1), std::min(x, s.width - 1), c);
        }
      }
      for (std::size_t by = 0; by < ph; by += 8) {
        for (std::size_t bx = 0; bx < pw; bx += 8) {
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) block[i * 8 + j] = plane[(by + i) * pw + bx + j];
          detail::dct8x8(block, coef, false);
          for (double& k : coef) {
            const std::int64_t level = std::llround(k / step);
            ++hist[level];
            ++total;
            k = static_cast<double>(level) * step;
          }
          detail::dct8x8(coef, block, true);
          for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) recon[(by + i) * pw + bx + j] = block[i * 8 + j];
        }
      }
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x) out.at(y, x, c) = recon[y * pw + x];
    }
    out_frames.push_back(clamp_unit(out));
  }

  const double bits_per_symbol = detail::shannon_entropy_bits(hist, total);
  const double symbols_per_frame = static_cast<double>(ph * pw * s.channels);
  CompressedResult r;
  r.video = VideoFrames(std::move(out_frames), v.frame_rate);
  r.measured_bitrate = std::max(1.0, bits_per_symbol * symbols_per_frame) * v.frame_rate;
  r.codec_echo = "mock dct8x8 q=" + format_real(q) + " step=" + format_real(step);
  return r;
}

namespace detail {

inline std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
    tmpl.replace(pos, key.size(), value);
  }
  return tmpl;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  return out + "'";
}

inline std::filesystem::path scratch_root() {
  if (const char* env = std::getenv("UAPQ_SCRATCH"); env != nullptr && *env != '\0') return env;
  return std::filesystem::temp_directory_path();
}

inline std::filesystem::path unique_scratch_dir() {
  static std::atomic<std::uint64_t> counter{0};
  const auto dir = scratch_root() / ("uapq-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

struct CommandOutcome {
  int exit_code = -1;
  std::string output;
};

inline CommandOutcome run_logged(const std::string& command, const std::filesystem::path& log) {
  const int status = std::system(("( " + command + "\n) >" + shell_quote(log.string()) + " 2>&1").c_str());
  CommandOutcome out;
  out.exit_code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  out.output = ss.str();
  return out;
}

class ScratchDir {
 public:
  ScratchDir() : path_(unique_scratch_dir()) {}
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace detail

// Writes the video as Y4M into a per-call scratch directory (root taken from
// $UAPQ_SCRATCH), runs the encode and decode templates through /bin/sh and
// reads the decoded Y4M back. Bitrate is measured from the encoded file.
inline CompressedResult external_encode_decode(const VideoFrames& v, const CodecSpec& spec) {
  spec.validate();
  if (spec.kind != CodecKind::external) throw ParameterError("external_encode_decode needs an external codec spec");
  v.validate();
  detail::ScratchDir scratch;
  const auto input = scratch.path() / "input.y4m";
  const auto encoded = scratch.path() / ("encoded." + spec.container_ext);
  const auto decoded = scratch.path() / "decoded.y4m";
  io::write_y4m(input, v);

  std::string enc = detail::substitute(spec.encode_template, "{input}", detail::shell_quote(input.string()));
  enc = detail::substitute(enc, "{output}", detail::shell_quote(encoded.string()));
  enc = detail::substitute(enc, "{bitrate}", std::to_string(std::llround(spec.target_bitrate)));
  const auto enc_run = detail::run_logged(enc, scratch.path() / "encode.log");
  if (enc_run.exit_code != 0) {
    throw CodecError("encoder exited with status " + std::to_string(enc_run.exit_code), enc_run.output);
  }
  if (!std::filesystem::exists(encoded) || std::filesystem::file_size(encoded) == 0) {
    throw CodecError("encoder produced no output at " + encoded.string(), enc_run.output);
  }

  std::string dec = detail::substitute(spec.decode_template, "{input}", detail::shell_quote(encoded.string()));
  dec = detail::substitute(dec, "{output}", detail::shell_quote(decoded.string()));
  const auto dec_run = detail::run_logged(dec, scratch.path() / "decode.log");
  if (dec_run.exit_code != 0) {
    throw CodecError("decoder exited with status " + std::to_string(dec_run.exit_code), dec_run.output);
  }

  CompressedResult r;
  try {
    VideoFrames back = io::read_y4m(decoded);
    if (back.frames.size() != v.frames.size() || back.shape().height != v.shape().height ||
        back.shape().width != v.shape().width) {
      throw CodecError("decoded video has " + std::to_string(back.frames.size()) + " frames of " +
                           to_string(back.shape()) + ", expected " + std::to_string(v.frames.size()) + " of " +
                           to_string(v.shape()),
                       dec_run.output);
    }
    back.frame_rate = v.frame_rate;
    r.video = std::move(back);
  } catch (const FormatError& e) {
    throw CodecError(std::string("decoded output is not readable: ") + e.what(), dec_run.output);
  }
  r.measured_bitrate = static_cast<double>(std::filesystem::file_size(encoded)) * 8.0 / v.duration();
  r.codec_echo = detail::substitute(spec.encode_template, "{bitrate}", std::to_string(std::llround(spec.target_bitrate)));
  return r;
}

inline CompressedResult encode_decode(const VideoFrames& v, const CodecSpec& spec) {
  return spec.kind == CodecKind::mock ? mock_encode_decode(v, spec.quality) : external_encode_decode(v, spec);
}

}  // namespace uapq
