#pragma once

// Client side of the external metric bridge. A bridge is a subprocess that
// reads one JSON request per line on stdin and answers with one JSON
// response per line on stdout (see docs/bridge-protocol.md).

#include <openssl/evp.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapq/error.hpp"
#include "uapq/image.hpp"
#include "uapq/metrics.hpp"

namespace uapq {

namespace bridge {

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw BridgeError("base64 payload length is not a multiple of 4", false);
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw BridgeError("malformed base64 payload", false);
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// {height, width, channels, data: base64 of little-endian f32}
inline nlohmann::json encode_raster(const Field& f) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(4 * f.size());
  for (double v : f.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return {{"height", f.height()}, {"width", f.width()}, {"channels", f.channels()}, {"data", base64_encode(bytes)}};
}

inline Field decode_raster(const nlohmann::json& j) {
  const Shape s{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                j.at("channels").get<std::size_t>()};
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != 4 * s.size()) {
    throw BridgeError("raster payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(4 * s.size()),
                      false);
  }
  std::vector<double> data(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[4 * i + k]) << (8 * k);
    data[i] = std::bit_cast<float>(bits);
  }
  return Field(s, std::move(data));
}

// Child process whose stdin/stdout are one end of a socket pair, so writes
// to a dead child report EPIPE instead of raising SIGPIPE.
class Subprocess {
 public:
  explicit Subprocess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
      throw BridgeError("socketpair failed: " + std::string(std::strerror(errno)), true);
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw BridgeError("fork failed: " + std::string(std::strerror(errno)), true);
    }
    if (pid_ == 0) {
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ~Subprocess() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
      ::close(fd_);
    }
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  void write_line(const std::string& line) {
    std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeError("bridge write failed: " + std::string(std::strerror(errno)), true);
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeError("bridge read failed: " + std::string(std::strerror(errno)), true);
      }
      if (n == 0) throw BridgeError("bridge closed its output stream", true);
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace bridge

// Metric served by a bridge subprocess. Requests are strictly serial; the
// internal mutex serialises callers that share one handle.
class ExternalMetric final : public Metric {
 public:
  explicit ExternalMetric(const std::string& command) : ExternalMetric(command, std::make_unique<bridge::Subprocess>(command)) {}

  const std::string& command() const noexcept { return command_; }

  nlohmann::json request(const std::string& op, const Field* image) const {
    std::lock_guard lock(mutex_);
    const std::int64_t id = next_id_++;
    nlohmann::json req{{"id", id}, {"op", op}};
    if (image != nullptr) req["image"] = bridge::encode_raster(*image);
    proc_->write_line(req.dump());
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(proc_->read_line());
    } catch (const nlohmann::json::exception& e) {
      throw BridgeError(std::string("malformed bridge response: ") + e.what(), false);
    }
    if (!resp.contains("id") || resp.at("id") != id) {
      throw BridgeError("bridge response id does not match request " + std::to_string(id), false);
    }
    if (!resp.value("ok", false)) {
      throw BridgeError("bridge " + op + " failed: " + resp.value("error", std::string("unknown error")), false);
    }
    return resp;
  }

 protected:
  double evaluate(const Field& img) const override {
    const auto resp = request("score", &img);
    const double s = resp.at("score").get<double>();
    if (!std::isfinite(s)) throw BridgeError("bridge returned a non-finite score", false);
    return s;
  }

  GradientField differentiate(const Field& img) const override {
    const auto resp = request("gradient", &img);
    Field g = bridge::decode_raster(resp.at("gradient"));
    require_same_shape(img, g, "bridge gradient");
    return g;
  }

 private:
  ExternalMetric(const std::string& command, std::unique_ptr<bridge::Subprocess> proc)
      : Metric(handshake(*proc)), command_(command), proc_(std::move(proc)) {}

  static MetricDescriptor handshake(bridge::Subprocess& proc) {
    proc.write_line(nlohmann::json{{"id", 0}, {"op", "info"}}.dump());
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(proc.read_line());
    } catch (const nlohmann::json::exception& e) {
      throw BridgeError(std::string("malformed bridge info response: ") + e.what(), false);
    }
    if (resp.value("id", -1) != 0 || !resp.value("ok", false)) {
      throw BridgeError("bridge info request failed: " + resp.value("error", std::string("bad response")), false);
    }
    const nlohmann::json& info = resp.contains("info") ? resp.at("info") : resp;
    try {
      return MetricDescriptor{info.at("name").get<std::string>(), info.at("score_lo").get<double>(),
                              info.at("score_hi").get<double>(), info.at("supports_gradient").get<bool>(),
                              MetricKind::external};
    } catch (const nlohmann::json::exception& e) {
      throw BridgeError(std::string("incomplete bridge info: ") + e.what(), false);
    }
  }

  std::string command_;
  std::unique_ptr<bridge::Subprocess> proc_;
  mutable std::mutex mutex_;
  mutable std::int64_t next_id_ = 1;
};

// "builtin:<name>" or "external:<command line>".
inline MetricHandle make_metric(const std::string& spec) {
  constexpr std::string_view kBuiltin = "builtin:", kExternal = "external:";
  if (spec.rfind(kBuiltin, 0) == 0) {
    const std::string name = spec.substr(kBuiltin.size());
    if (auto m = find_builtin(name)) return m;
    throw ConfigError("unknown built-in metric '" + name + "'");
  }
  if (spec.rfind(kExternal, 0) == 0) {
    const std::string cmd = spec.substr(kExternal.size());
    if (cmd.empty()) throw ConfigError("external metric spec has an empty command");
    return std::make_shared<ExternalMetric>(cmd);
  }
  throw ConfigError("metric spec '" + spec + "' must start with builtin: or external:");
}

}  // namespace uapq
