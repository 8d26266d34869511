#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace av {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition (shapes, ranges, sizes).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite values, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel& log_level_ref() {
  static LogLevel level = [] {
    const char* env = std::getenv("AV_LOG_LEVEL");
    if (env == nullptr) return LogLevel::Info;
    std::string_view v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void set_log_level(LogLevel level) { log_level_ref() = level; }

inline void log(LogLevel level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level_ref())) return;
  static constexpr const char* tags[] = {"error", "info", "debug"};
  std::cerr << "[av:" << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void log_warn(std::string_view msg) { log(LogLevel::Info, std::string("warning: ").append(msg)); }

}  // namespace av
