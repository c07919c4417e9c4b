#include "sattn/tasks.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "sattn/errors.hpp"
#include "sattn/rng.hpp"

namespace sattn {

const char* task_name(Task t) noexcept {
  switch (t) {
  case Task::FuncComp: return "funccomp";
  case Task::BinRel: return "binrel";
  case Task::Match3: return "match3";
  case Task::Quotient: return "quotient";
  case Task::DisjReduction: return "disj_reduction";
  }
  return "unknown";
}

std::optional<Task> parse_task(const std::string& name) {
  for (Task t : {Task::FuncComp, Task::BinRel, Task::Match3, Task::Quotient, Task::DisjReduction})
    if (name == task_name(t)) return t;
  return std::nullopt;
}

namespace {

void check_range(std::size_t lo, std::size_t hi, const char* what) {
  if (lo < 1 || lo > hi) throw std::invalid_argument(std::string(what) + ": need 1 <= Nmin <= Nmax");
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + ": P must lie in [0, 1]");
}

std::size_t sample_size(RngStream& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

std::vector<std::int64_t> bernoulli_matrix(RngStream& rng, std::size_t m, double p) {
  std::vector<std::int64_t> r(m * m);
  for (auto& v : r) v = rng.bernoulli(p) ? 1 : 0;
  return r;
}

std::vector<std::int64_t> match3_labels(const std::vector<std::int64_t>& x, std::int64_t modulus) {
  const std::size_t n = x.size();
  std::vector<std::int64_t> y(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n && !y[i]; ++j)
      for (std::size_t k = 0; k < n; ++k)
        if ((x[i] + x[j] + x[k]) % modulus == 0) {
          y[i] = 1;
          break;
        }
  return y;
}

double positive_percent(const std::vector<std::int64_t>& y) {
  const auto ones = std::count(y.begin(), y.end(), 1);
  return 100.0 * static_cast<double>(ones) / static_cast<double>(y.size());
}

} // namespace

std::vector<TaskInstance> gen_funccomp(RngStream& rng, std::size_t count, const FuncCompGen& cfg) {
  check_range(cfg.nmin, cfg.nmax, "gen_funccomp");
  if (cfg.nmin < 2) throw std::invalid_argument("gen_funccomp: Nmin must be >= 2");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::size_t n = sample_size(rng, cfg.nmin, cfg.nmax);
    const auto hi = static_cast<std::int64_t>(n) - 1;
    std::vector<std::int64_t> x(n);
    std::int64_t y = 0;
    for (;;) {
      for (auto& v : x) v = rng.uniform_int(0, hi);
      y = rng.uniform_int(0, 1);
      const auto x0 = static_cast<std::size_t>(x[0]);
      if (y == 1 && x[x0] != 0) {
        x[x0] = 0;
      } else if (y == 0 && x[x0] == 0) {
        std::vector<std::int64_t> candidates;
        for (std::size_t i = 1; i < n; ++i)
          if (x[i] != 0) candidates.push_back(static_cast<std::int64_t>(i));
        // All of x_1..x_{n-1} are zero: no valid x_0, draw again.
        if (candidates.empty()) continue;
        x[0] = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
      }
      break;
    }
    TaskInstance inst;
    inst.task = Task::FuncComp;
    inst.x.push_back(static_cast<std::int64_t>(n));
    inst.x.insert(inst.x.end(), x.begin(), x.end());
    inst.y = {y};
    inst.meta.n = n;
    inst.meta.seed = rng.seed();
    inst.meta.index = idx;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> gen_binrel(RngStream& rng, std::size_t count, const BinRelGen& cfg) {
  check_range(cfg.nmin, cfg.nmax, "gen_binrel");
  check_probability(cfg.p, "gen_binrel");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::size_t m = sample_size(rng, cfg.nmin, cfg.nmax);
    TaskInstance inst;
    inst.task = Task::BinRel;
    inst.x = bernoulli_matrix(rng, m, cfg.p);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        bool hit = false;
        for (std::size_t k = 0; k < m && !hit; ++k) hit = inst.x[i * m + k] == 1 && inst.x[k * m + j] == 1;
        inst.y.push_back(hit ? 1 : 0);
      }
    inst.meta.n = m * m;
    inst.meta.m = m;
    inst.meta.p = cfg.p;
    inst.meta.seed = rng.seed();
    inst.meta.index = idx;
    out.push_back(std::move(inst));
  }
  return out;
}

std::size_t match3_bin(const TaskInstance& inst) {
  if (inst.y.empty()) throw std::invalid_argument("match3_bin: empty label sequence");
  const auto ones = static_cast<std::size_t>(std::count(inst.y.begin(), inst.y.end(), 1));
  // Integer comparison keeps the bin edges exact.
  return std::min<std::size_t>(3, 4 * ones / inst.y.size());
}

std::vector<TaskInstance> gen_match3(RngStream& rng, std::size_t dataset_size, const Match3Gen& cfg) {
  check_range(cfg.nmin, cfg.nmax, "gen_match3");
  if (dataset_size == 0 || dataset_size % 4 != 0) throw std::invalid_argument("gen_match3: D must be a positive multiple of 4");
  if (cfg.modulus < 4) throw std::invalid_argument("gen_match3: M must be >= 4");
  const std::size_t per_bin = dataset_size / 4;
  const std::size_t seed_cap = std::max<std::size_t>(1, dataset_size / 10 / 4);
  // Background values in [1, (M-1)/3] never form a matching triple.
  const std::int64_t background_hi = (cfg.modulus - 1) / 3;

  std::vector<std::vector<TaskInstance>> bins(4);
  for (std::size_t it = 0; it < cfg.seed_iterations; ++it) {
    const std::int64_t skew = rng.uniform_int(1, 40);
    const std::size_t n = sample_size(rng, cfg.nmin, cfg.nmax);
    const double noise = cfg.noise_scale * static_cast<double>(skew) / 100.0;
    for (std::size_t attempt = 0; attempt < cfg.max_tries; ++attempt) {
      std::vector<std::int64_t> x(n);
      for (auto& v : x) v = rng.bernoulli(noise) ? rng.uniform_int(0, cfg.modulus - 1) : rng.uniform_int(1, background_hi);
      std::vector<std::int64_t> y = match3_labels(x, cfg.modulus);
      const double pct = positive_percent(y);
      if (pct < static_cast<double>(skew)) continue;
      TaskInstance inst;
      inst.task = Task::Match3;
      inst.x = std::move(x);
      inst.y = std::move(y);
      inst.meta.n = n;
      inst.meta.modulus = cfg.modulus;
      inst.meta.seed = rng.seed();
      inst.meta.skewness = skew;
      inst.meta.achieved = pct;
      auto& bin = bins[match3_bin(inst)];
      if (bin.size() < seed_cap) bin.push_back(std::move(inst));
      break;
    }
  }

  for (std::size_t b = 0; b < 4; ++b) {
    auto& bin = bins[b];
    if (bin.empty()) {
      throw GenerationError("gen_match3: bin " + std::to_string(b) + " received no sequence after " +
                            std::to_string(cfg.seed_iterations) + " seeding iterations");
    }
    while (bin.size() != per_bin) {
      const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(bin.size()) - 1));
      TaskInstance copy = bin[pick];
      const std::vector<std::size_t> perm = rng.permutation(copy.x.size());
      TaskInstance permuted = copy;
      for (std::size_t t = 0; t < perm.size(); ++t) {
        permuted.x[t] = copy.x[perm[t]];
        permuted.y[t] = copy.y[perm[t]];
      }
      bin.push_back(std::move(permuted));
    }
  }

  std::vector<TaskInstance> out;
  out.reserve(dataset_size);
  for (auto& bin : bins)
    for (auto& inst : bin) {
      inst.meta.index = out.size();
      out.push_back(std::move(inst));
    }
  return out;
}

std::vector<TaskInstance> gen_quotient(RngStream& rng, std::size_t count, const QuotientGen& cfg) {
  check_range(cfg.nmin, cfg.nmax, "gen_quotient");
  check_probability(cfg.p, "gen_quotient");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::size_t m = sample_size(rng, cfg.nmin, cfg.nmax);
    TaskInstance inst;
    inst.task = Task::Quotient;
    inst.x = bernoulli_matrix(rng, m, cfg.p);
    std::vector<std::int64_t> col(m);
    for (auto& c : col) c = rng.uniform_int(0, static_cast<std::int64_t>(m) - 1);
    const auto& r = inst.x;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) {
          inst.y.push_back(kMaskedLabel);
          continue;
        }
        bool hit = false;
        for (std::size_t k1 = 0; k1 < m && !hit; ++k1)
          for (std::size_t k2 = 0; k2 < m && !hit; ++k2)
            hit = k1 != k2 && r[i * m + k1] == 1 && r[j * m + k2] == 1 && col[k1] == col[k2];
        inst.y.push_back(hit ? 1 : 0);
      }
    inst.meta.n = m * m;
    inst.meta.m = m;
    inst.meta.p = cfg.p;
    inst.meta.seed = rng.seed();
    inst.meta.index = idx;
    inst.meta.col = std::move(col);
    out.push_back(std::move(inst));
  }
  return out;
}

TaskInstance build_disj_instance(const std::string& p, const std::string& q) {
  if (p.size() != q.size()) throw std::invalid_argument("build_disj_instance: p and q differ in length");
  if (p.empty()) throw std::invalid_argument("build_disj_instance: empty bit strings");
  for (char c : p + q)
    if (c != '0' && c != '1') throw std::invalid_argument("build_disj_instance: bits must be '0' or '1'");
  const std::size_t s = p.size();
  const std::size_t m = 2 * s + 2;
  TaskInstance inst;
  inst.task = Task::DisjReduction;
  inst.x.assign(m * m, 0);
  // 1-based A(1, 2+j) = p_j and B(2+s+j, 2) = q_j, with B = R^T.
  for (std::size_t j = 1; j <= s; ++j) {
    inst.x[0 * m + (1 + j)] = p[j - 1] == '1';
    inst.x[1 * m + (1 + s + j)] = q[j - 1] == '1';
  }
  inst.meta.col.assign(m, 1);
  for (std::size_t j = 1; j <= s; ++j) {
    inst.meta.col[1 + j] = static_cast<std::int64_t>(2 + j);
    inst.meta.col[1 + s + j] = static_cast<std::int64_t>(2 + j);
  }
  inst.meta.n = m * m;
  inst.meta.m = m;
  inst.y = oracle_label(inst.task, inst.x, inst.meta).y;
  return inst;
}

QuotientInstance to_quotient_instance(const TaskInstance& inst) {
  if (inst.task != Task::Quotient && inst.task != Task::DisjReduction) {
    throw std::invalid_argument("to_quotient_instance: not a quotient-style instance");
  }
  if (!inst.meta.m) throw std::invalid_argument("to_quotient_instance: missing m");
  const std::size_t m = *inst.meta.m;
  if (inst.x.size() != m * m || inst.meta.col.size() != m) throw ShapeError("to_quotient_instance: inconsistent sizes");
  QuotientInstance q;
  q.m = m;
  q.a.resize(m * m);
  q.b.resize(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      q.a[i * m + j] = inst.x[i * m + j] ? 1 : 0;
      q.b[i * m + j] = inst.x[j * m + i] ? 1 : 0;
    }
  // Colours may be 0-based; shift into [1, m] keeping equality classes.
  const std::int64_t lo = *std::min_element(inst.meta.col.begin(), inst.meta.col.end());
  for (std::int64_t c : inst.meta.col) {
    const std::int64_t shifted = c - lo + 1;
    if (shifted > static_cast<std::int64_t>(m)) throw std::invalid_argument("to_quotient_instance: colour range exceeds m");
    q.col.push_back(shifted);
  }
  return q;
}

// ---------------------------------------------------------------------------
// JSONL.

std::string to_jsonl_line(const TaskInstance& inst) {
  nlohmann::ordered_json meta;
  meta["n"] = inst.meta.n;
  meta["m"] = inst.meta.m ? nlohmann::ordered_json(*inst.meta.m) : nlohmann::ordered_json(nullptr);
  meta["M"] = inst.meta.modulus ? nlohmann::ordered_json(*inst.meta.modulus) : nlohmann::ordered_json(nullptr);
  meta["P"] = inst.meta.p ? nlohmann::ordered_json(*inst.meta.p) : nlohmann::ordered_json(nullptr);
  meta["seed"] = inst.meta.seed;
  meta["index"] = inst.meta.index;
  if (inst.meta.skewness) meta["skewness"] = *inst.meta.skewness;
  if (inst.meta.achieved) meta["achieved"] = *inst.meta.achieved;
  if (!inst.meta.col.empty()) meta["col"] = inst.meta.col;
  nlohmann::ordered_json j;
  j["task"] = task_name(inst.task);
  j["x"] = inst.x;
  j["y"] = inst.y;
  j["meta"] = std::move(meta);
  return j.dump();
}

void write_jsonl(std::ostream& out, const std::vector<TaskInstance>& data) {
  for (const TaskInstance& inst : data) out << to_jsonl_line(inst) << '\n';
}

std::vector<TaskInstance> read_jsonl(std::istream& in) {
  std::vector<TaskInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TaskInstance inst;
      const auto task = parse_task(j.at("task").get<std::string>());
      if (!task) throw std::invalid_argument("unknown task");
      inst.task = *task;
      inst.x = j.at("x").get<std::vector<std::int64_t>>();
      inst.y = j.at("y").get<std::vector<std::int64_t>>();
      const auto& meta = j.at("meta");
      inst.meta.n = meta.at("n").get<std::size_t>();
      if (!meta.at("m").is_null()) inst.meta.m = meta.at("m").get<std::size_t>();
      if (!meta.at("M").is_null()) inst.meta.modulus = meta.at("M").get<std::int64_t>();
      if (!meta.at("P").is_null()) inst.meta.p = meta.at("P").get<double>();
      inst.meta.seed = meta.at("seed").get<std::uint64_t>();
      inst.meta.index = meta.at("index").get<std::size_t>();
      if (meta.contains("skewness")) inst.meta.skewness = meta.at("skewness").get<std::int64_t>();
      if (meta.contains("achieved")) inst.meta.achieved = meta.at("achieved").get<double>();
      if (meta.contains("col")) inst.meta.col = meta.at("col").get<std::vector<std::int64_t>>();
      out.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw std::invalid_argument("read_jsonl: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

} // namespace sattn
