#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sattn/transformer.hpp"

namespace sattn {

class RngStream;

enum class TheoryTask { FuncComp, BinRel, Match3, Quotient };

const char* theory_task_name(TheoryTask t) noexcept;

/// Hand-set weights solve each task exactly only once the gap between the
/// best and second-best pair score, after scaling, is large enough for the
/// runner-up terms to vanish in double precision. Builders multiply the
/// score projections by a common factor until the guaranteed gap reaches
/// `min_log_margin`.
struct BuildOptions {
  double min_log_margin = 50.0;
};

// Instances use 1-based values throughout, as in the constructions.

struct FuncCompInstance {
  std::vector<std::int64_t> g; // g(1..n) in [1, n]
  std::vector<std::int64_t> h; // h(1..n) in [1, n]
  std::int64_t x = 1;
};

struct BinRelInstance {
  std::size_t m = 0;
  std::vector<std::uint8_t> a; // row-major m x m
  std::vector<std::uint8_t> b;
};

struct Match3Instance {
  std::int64_t modulus = 2;
  std::vector<std::int64_t> p;
};

struct QuotientInstance {
  std::size_t m = 0;
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> b;
  std::vector<std::int64_t> col; // col(1..m) in [1, m]
};

/// Tokens 1..2n+1 carry g, then h, then x. The answer h(g(x)) is read with
/// readout_nearest_int at the last token.
TransformerSpec build_funccomp(std::size_t n, const BuildOptions& opt = {});
/// Tokens are the m*m grid cells in row-major order; sign readout per cell.
TransformerSpec build_binrel(std::size_t m, const BuildOptions& opt = {});
/// Heads target sums m and 2m, plus 0 when `allow_zero` (inputs may hold 0).
TransformerSpec build_match3(std::size_t n, std::int64_t m, bool allow_zero = false, const BuildOptions& opt = {});
TransformerSpec build_quotient(std::size_t m, const BuildOptions& opt = {});

std::vector<std::int64_t> funccomp_word(const FuncCompInstance& inst);
std::vector<std::int64_t> binrel_word(const BinRelInstance& inst);
std::vector<std::int64_t> match3_word(const Match3Instance& inst);
std::vector<std::int64_t> quotient_word(const QuotientInstance& inst);

/// Brute-force answers: h(g(x)); per-cell composition bits; per-position
/// Match3 bits; per-cell quotient bits.
std::int64_t funccomp_answer(const FuncCompInstance& inst);
std::vector<int> binrel_answer(const BinRelInstance& inst);
std::vector<int> match3_answer(const Match3Instance& inst);
std::vector<int> quotient_answer(const QuotientInstance& inst);

/// Exact integer score of pair (j, k) for query i (all 0-based token
/// indices), an order-preserving multiple of the construction's score.
/// Computed from the closed form, without exponentials or floating point.
std::int64_t funccomp_exact_score(const FuncCompInstance& inst, std::size_t i, std::size_t j, std::size_t k);
std::int64_t binrel_exact_score(const BinRelInstance& inst, std::size_t i, std::size_t j, std::size_t k);
std::int64_t match3_exact_score(const Match3Instance& inst, std::int64_t target, std::size_t i, std::size_t j,
                            std::size_t k);
std::int64_t quotient_exact_score(const QuotientInstance& inst, std::size_t i, std::size_t j, std::size_t k);

struct ConstructionFailure {
  nlohmann::json instance;
  std::vector<std::int64_t> expected;
  std::vector<std::int64_t> got;
};

struct ConstructionReport {
  TheoryTask task = TheoryTask::FuncComp;
  std::size_t tried = 0;
  std::size_t exact = 0;
  /// Smallest and largest gap between the best and second-best scaled pair
  /// score over every checked query.
  double min_margin = 0.0;
  double max_margin = 0.0;
  /// Queries where the floating-point argmax differs from the exact one or
  /// violates the task's witness rule.
  std::size_t argmax_mismatches = 0;
  std::vector<ConstructionFailure> failures;

  bool all_exact() const { return tried == exact && argmax_mismatches == 0; }
  nlohmann::json to_json() const;
};

ConstructionReport verify_funccomp(const std::vector<FuncCompInstance>& instances, const BuildOptions& opt = {},
                                   StrassenPath path = StrassenPath::Naive);
ConstructionReport verify_binrel(const std::vector<BinRelInstance>& instances, const BuildOptions& opt = {},
                                 StrassenPath path = StrassenPath::Naive);
ConstructionReport verify_match3(const std::vector<Match3Instance>& instances, const BuildOptions& opt = {},
                                 StrassenPath path = StrassenPath::Naive);
ConstructionReport verify_quotient(const std::vector<QuotientInstance>& instances, const BuildOptions& opt = {},
                                   StrassenPath path = StrassenPath::Naive);

FuncCompInstance random_funccomp(std::size_t n, RngStream& rng);
BinRelInstance random_binrel(std::size_t m, double density, RngStream& rng);
/// Entries uniform in [1, modulus - 1].
Match3Instance random_match3(std::size_t n, std::int64_t modulus, RngStream& rng);
QuotientInstance random_quotient(std::size_t m, double density, RngStream& rng);

/// Merges a report into an accumulated one of the same task.
void merge_report(ConstructionReport& into, const ConstructionReport& part);

} // namespace sattn
