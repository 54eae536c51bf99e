#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace uapq {

// Every failure raised by the library derives from Error. The kind() tag is
// what the CLI maps onto its exit-code taxonomy.
enum class ErrorKind {
  shape,
  parameter,
  format,
  degenerate,
  capability,
  bridge,
  codec,
  grid,
  interval,
  no_overlap,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error(ErrorKind::parameter, what) {}
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::format, what + " (at byte " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

struct DegenerateError : Error {
  explicit DegenerateError(const std::string& what) : Error(ErrorKind::degenerate, what) {}
};

struct CapabilityError : Error {
  explicit CapabilityError(const std::string& what) : Error(ErrorKind::capability, what) {}
};

class BridgeError : public Error {
 public:
  BridgeError(const std::string& what, bool retryable) : Error(ErrorKind::bridge, what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class CodecError : public Error {
 public:
  CodecError(const std::string& what, std::string diagnostics = {})
      : Error(ErrorKind::codec, what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

struct GridError : Error {
  explicit GridError(const std::string& what) : Error(ErrorKind::grid, what) {}
};

struct IntervalError : Error {
  explicit IntervalError(const std::string& what) : Error(ErrorKind::interval, what) {}
};

struct NoOverlapError : Error {
  explicit NoOverlapError(const std::string& what) : Error(ErrorKind::no_overlap, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Rethrows the in-flight uapq::Error with `context` prepended, keeping its
// kind (and offset / retry flag / diagnostics where present).
[[noreturn]] inline void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(context + ": " + e.detail(), e.offset());
  } catch (const BridgeError& e) {
    throw BridgeError(context + ": " + e.what(), e.retryable());
  } catch (const CodecError& e) {
    throw CodecError(context + ": " + e.what(), e.diagnostics());
  } catch (const Error& e) {
    throw Error(e.kind(), context + ": " + e.what());
  }
}

}  // namespace uapq
