#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sattn/tensor.hpp"

namespace sattn {

class RngStream;

enum class Mechanism { Standard, Triangular, ThirdOrder, Strassen };

const char* mechanism_name(Mechanism m) noexcept;
/// Accepts "standard", "triangular", "third_order" (or "thirdorder"), "strassen".
std::optional<Mechanism> parse_mechanism(const std::string& name);

/// One attention head. Tokens are rows; every projection is out x in and is
/// applied as X * W^T. Weight order by kind:
///   Standard:   Wq, Wk, Wv
///   Triangular: Wq, Wk, V1, V2
///   ThirdOrder: Wq, Wk1, Wk2, V1, V2
///   Strassen:   Wf, Wg, Wh, V1, V2
struct AttentionParams {
  Mechanism kind = Mechanism::Standard;
  std::vector<Matrix> weights;
  /// Score multiplier; unset means 1/sqrt(projection out-dim).
  std::optional<double> scale;

  static AttentionParams standard(Matrix wq, Matrix wk, Matrix wv, std::optional<double> scale = {});
  static AttentionParams triangular(Matrix wq, Matrix wk, Matrix v1, Matrix v2, std::optional<double> scale = {});
  static AttentionParams third_order(Matrix wq, Matrix wk1, Matrix wk2, Matrix v1, Matrix v2,
                                     std::optional<double> scale = {});
  static AttentionParams strassen(Matrix wf, Matrix wg, Matrix wh, Matrix v1, Matrix v2,
                                  std::optional<double> scale = {});
  /// Random entries in [-bound, bound] with shapes proj_dim x input_dim.
  static AttentionParams random(Mechanism kind, std::size_t input_dim, std::size_t proj_dim, double bound,
                                RngStream& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  double effective_scale() const;
  /// Throws ShapeError on a wrong matrix count or inconsistent shapes.
  void validate() const;
};

/// Per-key exclusion flags: entry t != 0 removes token t as a key. For pair
/// mechanisms a pair is removed when either member is.
using KeyMask = std::span<const std::uint8_t>;

/// Full n x n exclusion for standard attention: entry i*n+j != 0 removes key j
/// from query i.
using PairMask = std::span<const std::uint8_t>;

Matrix standard_attention(const Matrix& x, const AttentionParams& p, PairMask blocked = {});
/// Key-mask convenience form: expands to an n x n mask.
Matrix standard_attention_keys(const Matrix& x, const AttentionParams& p, KeyMask blocked);

/// Flat m*m tokens, row-major grid. Throws ShapeError when the token count is
/// not a perfect square.
Matrix triangular_attention(const Matrix& x, const AttentionParams& p, KeyMask blocked = {});

Matrix third_order_attention(const Matrix& x, const AttentionParams& p, KeyMask blocked = {});

Matrix strassen_attention_naive(const Matrix& x, const AttentionParams& p, KeyMask blocked = {});

struct FastPathStats {
  std::size_t fallback_rows = 0;
};

/// Evaluates the pair softmax through products of n x n matrices, cost
/// dominated by one Y * [..] product done with strassen_matmul. Rows whose
/// stabilized denominator underflows are recomputed with the direct loop.
Matrix strassen_attention_fast(const Matrix& x, const AttentionParams& p, KeyMask blocked = {},
                               FastPathStats* stats = nullptr,
                               std::size_t cutoff = kDefaultStrassenCutoff);

/// out[i, c] = (X diag(V1[:,c]) Y diag(V2[:,c]) Z)_ii / (X Y Z)_ii for square
/// X, Y, Z with nonnegative entries.
Matrix triple_product_attention(const Matrix& x, const Matrix& y, const Matrix& z, const Matrix& v1,
                                const Matrix& v2, std::size_t cutoff = kDefaultStrassenCutoff);

enum class StrassenPath { Naive, Fast };

/// Dispatch on p.kind.
Matrix attention(const Matrix& x, const AttentionParams& p, KeyMask blocked = {},
                 StrassenPath path = StrassenPath::Naive);

/// Scaled log-scores of the pair mechanisms: row i holds the score of pair
/// (j, k) at column j*n + k. Only ThirdOrder and Strassen.
Matrix pair_scores(const Matrix& x, const AttentionParams& p);

/// Exponential sums of a standard head at the last token of x, split by a
/// position set A of the other tokens.
struct SplitDecomposition {
  Vector alpha;
  Vector beta;
  Vector gamma;
  double lambda = 0.0;
  double mu = 0.0;
  double nu = 0.0;
  /// Common max-shift subtracted from every score before exponentiating.
  double shift = 0.0;
  std::vector<std::size_t> positions;

  /// (alpha + beta + gamma) / (lambda + mu + nu).
  Vector recombine() const;
};

/// x holds n word tokens followed by the auxiliary token (row n). `positions`
/// are 0-based word indices; including n throws std::invalid_argument.
SplitDecomposition split_decompose(const Matrix& x, const AttentionParams& p, std::span<const std::size_t> positions);

} // namespace sattn
