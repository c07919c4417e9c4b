#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sattn/attention.hpp"

namespace sattn {

struct BenchRecord {
  std::string mechanism;
  std::string path; // "naive" or "fast"
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t reps = 0;
  double median_seconds = 0.0;
  std::size_t peak_bytes = 0;
  /// "ok", "skipped_memory" (estimate above the guard) or "failed".
  std::string status = "ok";
};

inline constexpr const char* kBenchHeader = "mechanism,path,n,d,reps,median_seconds,peak_bytes,status";

struct BenchOptions {
  std::size_t reps = 5;
  /// Cells whose estimated working set exceeds this are skipped.
  std::size_t memory_limit_bytes = std::size_t{2} << 30;
  std::uint64_t seed = 1;
};

/// Median over `reps` timed forwards after one warm-up, on random inputs
/// seeded per (n, d). Each cell is isolated: a failing cell is recorded and
/// the sweep goes on. `fast` selects the product-form Strassen path and is
/// rejected for other mechanisms. Triangular cells with a non-square n are
/// recorded as failed.
std::vector<BenchRecord> bench_forward(Mechanism kind, bool fast, const std::vector<std::size_t>& ns,
                                       const std::vector<std::size_t>& ds, const BenchOptions& opt = {});

/// Naive vs Strassen matrix product on random n x n inputs; mechanism column
/// reads "matmul".
std::vector<BenchRecord> bench_matmul(const std::vector<std::size_t>& ns, const BenchOptions& opt = {});

/// Median over `rounds` of t(2n) / ((t(n) + t(n)') / 2), where the two
/// t(n) runs bracket the t(2n) run. Pairing cancels slow drift in machine
/// speed that separate medians do not. One unpaired warm-up per size.
double scaling_ratio(Mechanism kind, bool fast, std::size_t n, std::size_t d, std::size_t rounds,
                     std::uint64_t seed = 1);

/// Rough bytes allocated by one forward.
std::size_t estimated_forward_bytes(Mechanism kind, bool fast, std::size_t n, std::size_t d);

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records, bool header = true);

/// Median of a nonempty sample.
double median(std::vector<double> values);

} // namespace sattn
