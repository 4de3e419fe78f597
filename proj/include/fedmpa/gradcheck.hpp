#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fedmpa {

// Central finite differences against the analytic gradients of every loss
// path, on a small seeded synthetic client with dropout off.
struct GradCheckOptions {
  std::size_t probes = 100;  // per path
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string path;
  std::size_t probes = 0;
  std::size_t redrawn = 0;  // probes that crossed a ReLU kink and were redrawn
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return probes > 0 && max_rel_error < tolerance; }
};

// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts = {});

}  // namespace fedmpa
