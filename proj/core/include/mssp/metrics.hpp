#pragma once

#include <cstdint>
#include <string>

#include "mssp/image.hpp"

namespace mssp {

/// Confusion counts with changed = positive: fa = false alarms (unchanged
/// pixels predicted changed), ma = missed alarms (changed pixels predicted unchanged).
struct EvalReport {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fa = 0;
  std::uint64_t ma = 0;
  double pfa = 0.0;       // fa / #unchanged
  double pma = 0.0;       // ma / #changed (or / #unchanged, see EvalOptions)
  double accuracy = 0.0;
  double kappa = 0.0;

  std::uint64_t total() const noexcept { return tp + tn + fa + ma; }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalOptions {
  // Divide missed alarms by the unchanged-pixel count instead of the changed one.
  bool pma_over_unchanged = false;
};

/// Derived rates from raw counts. Empty denominators yield 0; a degenerate
/// confusion matrix (chance agreement 1) yields kappa 0.
EvalReport report_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fa, std::uint64_t ma,
                              const EvalOptions& options = {});

/// Compares a binary prediction with the reference, skipping pixels set in `exclude`.
EvalReport evaluate(const Mask& prediction, const Mask& reference, const Mask* exclude = nullptr,
                    const EvalOptions& options = {});

/// {"tp","tn","fa","ma","pfa","pma","accuracy","kappa"} in that key order.
std::string to_json(const EvalReport& report, int indent = -1);
EvalReport report_from_json(const std::string& text);

}  // namespace mssp
