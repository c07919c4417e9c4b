#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sattn/constructions.hpp"

namespace sattn {

class RngStream;

enum class Task { FuncComp, BinRel, Match3, Quotient, DisjReduction };

const char* task_name(Task t) noexcept;
std::optional<Task> parse_task(const std::string& name);

inline constexpr std::int64_t kMaskedLabel = -100;

struct InstanceMeta {
  /// FuncComp: domain size; Match3: sequence length; grid tasks: m*m.
  std::size_t n = 0;
  std::optional<std::size_t> m;
  std::optional<std::int64_t> modulus;
  std::optional<double> p;
  std::uint64_t seed = 0;
  std::size_t index = 0;
  /// Match3 only: the sampled skewness (percent) and the achieved one.
  std::optional<std::int64_t> skewness;
  std::optional<double> achieved;
  /// Quotient and DisjReduction: colour of each grid index.
  std::vector<std::int64_t> col;
};

/// FuncComp: x = (bottom, f(0), ..., f(n-1)) with bottom encoded as n, one
/// label. Grid tasks: x = flatten(R), one label per cell. Match3: x = values,
/// one label per token.
struct TaskInstance {
  Task task = Task::FuncComp;
  std::vector<std::int64_t> x;
  std::vector<std::int64_t> y;
  InstanceMeta meta;
};

struct FuncCompGen {
  std::size_t nmin = 25;
  std::size_t nmax = 30;
};
struct BinRelGen {
  std::size_t nmin = 6;
  std::size_t nmax = 8;
  double p = 0.325;
};
struct Match3Gen {
  std::size_t nmin = 30;
  std::size_t nmax = 35;
  std::int64_t modulus = 37;
  std::size_t seed_iterations = 5000;
  /// Sequences drawn per seeding iteration before it is abandoned.
  std::size_t max_tries = 1000;
  /// Noise tokens replace background tokens at rate noise_scale*skewness/100.
  double noise_scale = 0.2;
};
struct QuotientGen {
  std::size_t nmin = 6;
  std::size_t nmax = 8;
  double p = 0.433;
};

std::vector<TaskInstance> gen_funccomp(RngStream& rng, std::size_t count, const FuncCompGen& cfg = {});
std::vector<TaskInstance> gen_binrel(RngStream& rng, std::size_t count, const BinRelGen& cfg = {});
/// Two phases: skewed sequences seed four bins by percentage of positive
/// labels, up to max(1, D/40) each; joint permutations then fill every bin to
/// D/4. Throws GenerationError when a bin stays empty after seeding.
std::vector<TaskInstance> gen_match3(RngStream& rng, std::size_t dataset_size, const Match3Gen& cfg = {});
std::vector<TaskInstance> gen_quotient(RngStream& rng, std::size_t count, const QuotientGen& cfg = {});

/// Bin of a Match3 instance: 0..3 for [0,25), [25,50), [50,75), [75,100] %.
std::size_t match3_bin(const TaskInstance& inst);

struct TaskOracleResult {
  std::vector<std::int64_t> y;
};

/// Labels from the task definitions alone. Throws std::invalid_argument on a
/// malformed instance.
TaskOracleResult oracle_label(Task task, const std::vector<std::int64_t>& x, const InstanceMeta& meta);
inline TaskOracleResult oracle_label(const TaskInstance& inst) { return oracle_label(inst.task, inst.x, inst.meta); }

/// Quotient instance whose label at grid cell (1, 2) (1-based) equals
/// Disj(p, q). Bits are '0'/'1' characters.
TaskInstance build_disj_instance(const std::string& p, const std::string& q);

/// The same relation in construction form: A = R, B = R^T, colours shifted
/// to 1-based.
QuotientInstance to_quotient_instance(const TaskInstance& inst);

/// One JSON object per line, keys in a fixed order.
std::string to_jsonl_line(const TaskInstance& inst);
void write_jsonl(std::ostream& out, const std::vector<TaskInstance>& data);
std::vector<TaskInstance> read_jsonl(std::istream& in);

} // namespace sattn
