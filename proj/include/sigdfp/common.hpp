#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sigdfp {

inline constexpr const char* kVersion = "0.1.0";

// Configuration problems (bad keys, out-of-range values). CLI exits 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite state/cost/gradient detected mid-run. CLI exits 2.
struct numeric_error : std::runtime_error {
  numeric_error(const std::string& what, long round, long path, long step)
      : std::runtime_error(what + " (round=" + std::to_string(round) +
                           ", path=" + std::to_string(path) +
                           ", step=" + std::to_string(step) + ")"),
        round(round), path(path), step(step) {}
  long round;
  long path;
  long step;
};

// Precondition check for caller bugs (dimension mismatches and the like).
#define SIGDFP_REQUIRE(cond, msg) \
  do {                            \
    if (!(cond)) throw std::invalid_argument(msg); \
  } while (0)

}  // namespace sigdfp
