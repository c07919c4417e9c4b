// Definition-level labelers, written independently of the generators.

#include <algorithm>
#include <bitset>
#include <map>
#include <set>
#include <stdexcept>

#include "sattn/tasks.hpp"

namespace sattn {

namespace {

std::size_t grid_side(const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  if (!meta.m) throw std::invalid_argument("oracle_label: grid task without m");
  const std::size_t m = *meta.m;
  if (m == 0 || x.size() != m * m) throw std::invalid_argument("oracle_label: x is not an m*m grid");
  for (std::int64_t v : x)
    if (v != 0 && v != 1) throw std::invalid_argument("oracle_label: grid entries must be 0 or 1");
  return m;
}

std::vector<std::int64_t> funccomp(const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  const std::size_t n = x.size() - 1;
  if (x.size() < 2 || (meta.n != 0 && meta.n != n)) throw std::invalid_argument("oracle_label: funccomp length");
  auto f = [&](std::int64_t v) {
    if (v < 0 || v >= static_cast<std::int64_t>(n)) throw std::invalid_argument("oracle_label: value outside [0, n)");
    return x[static_cast<std::size_t>(v) + 1];
  };
  return {f(f(0)) == 0 ? 1 : 0};
}

// Boolean product row by row with bitsets: (R o R)_ij = OR_k R_ik R_kj.
std::vector<std::int64_t> binrel(const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  const std::size_t m = grid_side(x, meta);
  if (m > 64) throw std::invalid_argument("oracle_label: binrel side above 64");
  std::vector<std::bitset<64>> rows(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) rows[i][j] = x[i * m + j] != 0;
  std::vector<std::int64_t> y(m * m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::bitset<64> reach;
    for (std::size_t k = 0; k < m; ++k)
      if (rows[i][k]) reach |= rows[k];
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] = reach[j] ? 1 : 0;
  }
  return y;
}

// Residue sets: p_i matches iff some present residue r has -(p_i + r) present.
std::vector<std::int64_t> match3(const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  if (!meta.modulus || *meta.modulus < 1) throw std::invalid_argument("oracle_label: match3 without modulus");
  const std::int64_t mod = *meta.modulus;
  std::set<std::int64_t> present;
  for (std::int64_t v : x) {
    if (v < 0 || v >= mod) throw std::invalid_argument("oracle_label: match3 value outside [0, M)");
    present.insert(v);
  }
  std::vector<std::int64_t> y;
  y.reserve(x.size());
  for (std::int64_t v : x) {
    const bool hit = std::any_of(present.begin(), present.end(), [&](std::int64_t r) {
      return present.count(((-(v + r)) % mod + mod) % mod) != 0;
    });
    y.push_back(hit ? 1 : 0);
  }
  return y;
}

// Per colour class, row i reaches the set S_i(c) = {k : R_ik = 1, col k = c}.
// Distinct witnesses exist unless both sets are the same singleton.
std::vector<std::int64_t> quotient(const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  const std::size_t m = grid_side(x, meta);
  if (meta.col.size() != m) throw std::invalid_argument("oracle_label: colouring must have m entries");
  std::vector<std::map<std::int64_t, std::vector<std::size_t>>> reach(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k)
      if (x[i * m + k]) reach[i][meta.col[k]].push_back(k);
  std::vector<std::int64_t> y(m * m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) {
        y[i * m + j] = kMaskedLabel;
        continue;
      }
      bool hit = false;
      for (const auto& [c, si] : reach[i]) {
        const auto it = reach[j].find(c);
        if (it == reach[j].end()) continue;
        const auto& sj = it->second;
        if (si.size() > 1 || sj.size() > 1 || si.front() != sj.front()) {
          hit = true;
          break;
        }
      }
      y[i * m + j] = hit ? 1 : 0;
    }
  return y;
}

} // namespace

TaskOracleResult oracle_label(Task task, const std::vector<std::int64_t>& x, const InstanceMeta& meta) {
  switch (task) {
  case Task::FuncComp: return {funccomp(x, meta)};
  case Task::BinRel: return {binrel(x, meta)};
  case Task::Match3: return {match3(x, meta)};
  case Task::Quotient:
  case Task::DisjReduction: return {quotient(x, meta)};
  }
  throw std::invalid_argument("oracle_label: unknown task");
}

} // namespace sattn
