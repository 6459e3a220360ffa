#pragma once

// Shared primitives: error types, numeric sentinels, tolerances, formatting,
// a deterministic parallel-for and a tiny stderr logger.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlrepr {

/// Symbolic minus infinity: pre-anchor running maxima and the eta_{-1} convention.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Stopping-time value on paths that never stop.
inline constexpr int kNever = std::numeric_limits<int>::max();

inline constexpr double kProbTol = 1e-12;
inline constexpr double kCenterTol = 1e-12;
inline constexpr double kMarginFloor = 1e-9;
inline constexpr int kMaxBinaryDepth = 20;
inline constexpr int kMaxEnumLeaves = 4096;
inline constexpr std::uint64_t kMaxEnumRules = 10'000'000;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed documents, out-of-range parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tree / process / rule invariant violations.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Combinatorial guard exceeded (enumeration too large).
class GuardError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: bracket blow-up, fixed point not converging.
class SolveError : public Error {
 public:
  using Error::Error;
};

/// Operator certification failure; carries the offending node and margin.
class OperatorConditionError : public Error {
 public:
  OperatorConditionError(const std::string& msg, std::int64_t node_user_id, double margin)
      : Error(msg), node(node_user_id), margin(margin) {}
  std::int64_t node;
  double margin;
};

struct Tolerances {
  double root = 1e-11;         // |Phi| at an accepted root
  double bracket_rel = 1e-12;  // bracket width relative to 1+|xi|
  double residual = 1e-9;      // acceptance for representation residuals
};

/// 17-significant-digit decimal, stable spellings for non-finite values.
inline std::string format_sig17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Runs fn(i) for i in [0, n). Results must go to disjoint slots; the
/// schedule is work-stealing but outputs are index-addressed, so results
/// are identical for any thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), std::max(1u, hw ? hw : 4u));
  workers = std::min(workers, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

enum class LogLevel { Off = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("NLREPR_LOG");
    if (!env) return LogLevel::Off;
    std::string s(env);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Off;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[nlrepr] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[nlrepr:debug] %s\n", msg.c_str());
}

}  // namespace nlrepr
