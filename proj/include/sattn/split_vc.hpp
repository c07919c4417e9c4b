#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace sattn {

/// f: Sigma^n -> {0,1} with Sigma = {0, ..., alphabet-1}. The table index of
/// word w is sum_i w_i * |Sigma|^(n-1-i), so the first argument is the most
/// significant digit.
struct FiniteFunction {
  std::size_t alphabet = 2;
  std::size_t arity = 0;
  std::vector<std::uint8_t> table;

  /// Tabulates `f` over every word. Throws BudgetError past `max_entries`.
  static FiniteFunction from(std::size_t alphabet, std::size_t arity,
                             const std::function<int(std::span<const std::size_t>)>& f,
                             std::size_t max_entries = std::size_t{1} << 20);

  std::size_t size() const { return table.size(); }
  std::size_t index(std::span<const std::size_t> word) const;
  std::vector<std::size_t> word(std::size_t index) const;
  int operator()(std::span<const std::size_t> word) const { return table[index(word)]; }
  void validate() const;
};

/// Number of words of `arity` symbols, or throws BudgetError past `cap`.
std::size_t word_count(std::size_t alphabet, std::size_t arity, std::size_t cap);

/// Fixes argument `position` (0-based) to `symbol`.
FiniteFunction restrict_argument(const FiniteFunction& f, std::size_t position, std::size_t symbol);

/// Rows are indexed by words on A, columns by words on the complement, both
/// in table order; entry (r, c) = f(row_r merged with col_c).
struct SplitMatrix {
  std::vector<std::size_t> a; // 0-based, ascending
  std::vector<std::size_t> b;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> entries; // row-major

  int at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
};

SplitMatrix build_split_matrix(const FiniteFunction& f, std::span<const std::size_t> a);

struct ColumnVC {
  std::size_t value = 0;
  std::vector<std::size_t> rows; // shattered row indices, ascending
  /// certificate[pattern] is a column whose entries on `rows` spell the
  /// pattern, bit t of pattern standing for rows[t].
  std::vector<std::size_t> certificate;
};

struct SearchBudget {
  std::size_t max_entries = std::size_t{1} << 20;
  /// Bound on row subsets examined per position set.
  std::size_t max_subsets = std::size_t{1} << 26;
};

ColumnVC vc_dim_of_columns(const SplitMatrix& m, const SearchBudget& budget = {});

struct SplitVCReport {
  std::size_t value = 0;
  std::vector<std::size_t> witness; // 0-based positions of A
  std::vector<std::vector<std::size_t>> shattered_rows; // words on A
  std::vector<std::vector<std::size_t>> certificate;    // words on B, one per pattern
  /// Re-evaluates every certificate column on the shattered rows.
  bool self_check(const FiniteFunction& f) const;
  nlohmann::json to_json() const;
};

/// Maximum over every position set; ties go to the lexicographically smallest
/// ascending position list.
SplitVCReport split_vc(const FiniteFunction& f, const SearchBudget& budget = {});

/// Merges words on A and on its complement into a full word.
std::vector<std::size_t> merge_words(std::span<const std::size_t> a, std::span<const std::size_t> wa,
                                     std::span<const std::size_t> b, std::span<const std::size_t> wb);

// Functions from the lower-bound arguments.
/// Ind_n over [n]^(n+1); symbol s stands for the value s+1.
FiniteFunction ind_function(std::size_t n);
/// Sum_2[l, 2l] over ([2l-1] minus {2l-2})^l; see sum2_value for symbols.
FiniteFunction sum2_function(std::size_t ell);
std::size_t sum2_value(std::size_t ell, std::size_t symbol);
/// Disj_m over {0,1}^(2m), a in the first m arguments.
FiniteFunction disj_function(std::size_t m);

enum class Lemma { Ind, Sum2, Disj };

const char* lemma_name(Lemma l) noexcept;

struct LemmaCertificate {
  Lemma lemma = Lemma::Ind;
  std::size_t size = 0;
  bool pass = false;
  std::vector<std::size_t> a; // 0-based positions
  std::vector<std::vector<std::size_t>> rows;    // values as in the lemma
  std::vector<std::vector<std::size_t>> columns; // one per pattern
  std::string detail;
  nlohmann::json to_json() const;
};

/// Builds the explicit shattered rows and columns of the lemma and checks all
/// 2^k patterns by direct evaluation. Sizes: Ind 2..6, Sum2 even 4..8, Disj
/// 1..10; others throw std::invalid_argument.
LemmaCertificate check_lemma_certificate(Lemma lemma, std::size_t size);

/// Text form: first line "<alphabet> <arity>", then one line per word holding
/// its symbols and the bit, whitespace separated. With alphabet <= 10 a word
/// may also be written as one digit string ("0110 1"). Every word must appear
/// exactly once.
FiniteFunction parse_truth_table(std::istream& in);
void write_truth_table(std::ostream& out, const FiniteFunction& f);

} // namespace sattn
