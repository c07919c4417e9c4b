#include "sattn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <new>
#include <ostream>
#include <stdexcept>

#include "sattn/alloc_tracker.hpp"
#include "sattn/rng.hpp"

namespace sattn {

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t n, std::size_t d) {
  return base ^ (static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ULL) ^ (static_cast<std::uint64_t>(d) << 40);
}

// One warm-up, then the median of `reps` timed calls.
void time_cell(BenchRecord& rec, std::size_t reps, const std::function<void()>& body) {
  using clock = std::chrono::steady_clock;
  alloc_tracker::reset_peak();
  const std::size_t base = alloc_tracker::current_bytes();
  body();
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    body();
    samples.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  rec.median_seconds = median(std::move(samples));
  rec.peak_bytes = alloc_tracker::peak_bytes() - std::min(base, alloc_tracker::peak_bytes());
}

void run_cell(BenchRecord& rec, std::size_t estimate, const BenchOptions& opt, const std::function<void()>& prepare,
              const std::function<void()>& body) {
  if (estimate > opt.memory_limit_bytes) {
    rec.status = "skipped_memory";
    return;
  }
  try {
    prepare();
    time_cell(rec, opt.reps, body);
    rec.status = "ok";
  } catch (const std::bad_alloc&) {
    rec.status = "failed";
  } catch (const std::exception&) {
    rec.status = "failed";
  }
}

} // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::size_t estimated_forward_bytes(Mechanism kind, bool fast, std::size_t n, std::size_t d) {
  const std::size_t w = sizeof(double);
  const std::size_t vectors = 16 * n * d * w;
  switch (kind) {
  case Mechanism::Standard: return vectors + 2 * n * n * w;
  case Mechanism::Triangular: return vectors + 4 * n * w;
  case Mechanism::ThirdOrder:
  case Mechanism::Strassen:
    if (fast) return vectors + (8 + 4 * d) * n * n * w;
    return vectors + 2 * n * n * w;
  }
  return vectors;
}

std::vector<BenchRecord> bench_forward(Mechanism kind, bool fast, const std::vector<std::size_t>& ns,
                                       const std::vector<std::size_t>& ds, const BenchOptions& opt) {
  if (opt.reps < 5) throw std::invalid_argument("bench_forward: reps must be at least 5");
  if (fast && kind != Mechanism::Strassen) throw std::invalid_argument("bench_forward: fast path is Strassen only");
  std::vector<BenchRecord> out;
  for (std::size_t n : ns)
    for (std::size_t d : ds) {
      BenchRecord rec;
      rec.mechanism = mechanism_name(kind);
      rec.path = fast ? "fast" : "naive";
      rec.n = n;
      rec.d = d;
      rec.reps = opt.reps;
      if (n == 0 || d == 0) {
        rec.status = "failed";
        out.push_back(rec);
        continue;
      }
      Matrix x;
      AttentionParams p;
      const auto prepare = [&] {
        RngStream rng(cell_seed(opt.seed, n, d));
        x = random_matrix(n, d, rng);
        p = AttentionParams::random(kind, d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      };
      const auto body = [&] {
        const Matrix y = attention(x, p, {}, fast ? StrassenPath::Fast : StrassenPath::Naive);
        if (y.rows() != n) throw std::logic_error("bench_forward: wrong output shape");
      };
      run_cell(rec, estimated_forward_bytes(kind, fast, n, d), opt, prepare, body);
      out.push_back(rec);
    }
  return out;
}

std::vector<BenchRecord> bench_matmul(const std::vector<std::size_t>& ns, const BenchOptions& opt) {
  if (opt.reps < 5) throw std::invalid_argument("bench_matmul: reps must be at least 5");
  std::vector<BenchRecord> out;
  for (std::size_t n : ns)
    for (bool strassen : {false, true}) {
      BenchRecord rec;
      rec.mechanism = "matmul";
      rec.path = strassen ? "fast" : "naive";
      rec.n = n;
      rec.d = n;
      rec.reps = opt.reps;
      Matrix a, b;
      const auto prepare = [&] {
        RngStream rng(cell_seed(opt.seed, n, n));
        a = random_matrix(n, n, rng);
        b = random_matrix(n, n, rng);
      };
      const auto body = [&] {
        const Matrix c = strassen ? strassen_matmul(a, b) : matmul(a, b);
        if (c.rows() != n) throw std::logic_error("bench_matmul: wrong output shape");
      };
      run_cell(rec, 6 * n * n * sizeof(double), opt, prepare, body);
      out.push_back(rec);
    }
  return out;
}

double scaling_ratio(Mechanism kind, bool fast, std::size_t n, std::size_t d, std::size_t rounds,
                     std::uint64_t seed) {
  if (rounds == 0 || n == 0 || d == 0) throw std::invalid_argument("scaling_ratio: rounds, n and d must be positive");
  if (fast && kind != Mechanism::Strassen) throw std::invalid_argument("scaling_ratio: fast path is Strassen only");
  using clock = std::chrono::steady_clock;
  Matrix x[2];
  AttentionParams p[2];
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t len = n << s;
    RngStream rng(cell_seed(seed, len, d));
    x[s] = random_matrix(len, d, rng);
    p[s] = AttentionParams::random(kind, d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  }
  const StrassenPath path = fast ? StrassenPath::Fast : StrassenPath::Naive;
  const auto timed = [&](std::size_t s) {
    const auto t0 = clock::now();
    const Matrix y = attention(x[s], p[s], {}, path);
    const double sec = std::chrono::duration<double>(clock::now() - t0).count();
    if (y.rows() != x[s].rows()) throw std::logic_error("scaling_ratio: wrong output shape");
    return sec;
  };
  timed(0);
  timed(1);
  std::vector<double> ratios;
  ratios.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    const double before = timed(0);
    const double big = timed(1);
    const double after = timed(0);
    ratios.push_back(big / (0.5 * (before + after)));
  }
  return median(std::move(ratios));
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records, bool header) {
  if (header) out << kBenchHeader << '\n';
  const auto old = out.precision(9);
  for (const BenchRecord& r : records)
    out << r.mechanism << ',' << r.path << ',' << r.n << ',' << r.d << ',' << r.reps << ',' << r.median_seconds << ','
        << r.peak_bytes << ',' << r.status << '\n';
  out.precision(old);
}

} // namespace sattn
