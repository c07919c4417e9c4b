#include "sattn/split_vc.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sattn/errors.hpp"

namespace sattn {

std::size_t word_count(std::size_t alphabet, std::size_t arity, std::size_t cap) {
  if (alphabet == 0) throw std::invalid_argument("word_count: empty alphabet");
  std::size_t total = 1;
  for (std::size_t i = 0; i < arity; ++i) {
    if (total > cap / alphabet) {
      throw BudgetError("truth table of " + std::to_string(alphabet) + "^" + std::to_string(arity) +
                        " entries exceeds the cap of " + std::to_string(cap));
    }
    total *= alphabet;
  }
  if (total > cap) throw BudgetError("truth table exceeds the cap of " + std::to_string(cap));
  return total;
}

FiniteFunction FiniteFunction::from(std::size_t alphabet, std::size_t arity,
                                    const std::function<int(std::span<const std::size_t>)>& f,
                                    std::size_t max_entries) {
  FiniteFunction out;
  out.alphabet = alphabet;
  out.arity = arity;
  out.table.resize(word_count(alphabet, arity, max_entries));
  for (std::size_t idx = 0; idx < out.table.size(); ++idx) {
    const std::vector<std::size_t> w = out.word(idx);
    out.table[idx] = f(w) ? 1 : 0;
  }
  return out;
}

std::size_t FiniteFunction::index(std::span<const std::size_t> word) const {
  if (word.size() != arity) throw ShapeError("FiniteFunction: word length differs from arity");
  std::size_t idx = 0;
  for (std::size_t s : word) {
    if (s >= alphabet) throw std::out_of_range("FiniteFunction: symbol outside the alphabet");
    idx = idx * alphabet + s;
  }
  return idx;
}

std::vector<std::size_t> FiniteFunction::word(std::size_t index) const {
  std::vector<std::size_t> w(arity);
  for (std::size_t i = arity; i-- > 0;) {
    w[i] = index % alphabet;
    index /= alphabet;
  }
  return w;
}

void FiniteFunction::validate() const {
  if (alphabet == 0) throw std::invalid_argument("FiniteFunction: empty alphabet");
  std::size_t total = 1;
  for (std::size_t i = 0; i < arity; ++i) total *= alphabet;
  if (table.size() != total) throw ShapeError("FiniteFunction: table does not cover |Sigma|^n words");
  for (auto v : table)
    if (v > 1) throw std::invalid_argument("FiniteFunction: table entries must be 0 or 1");
}

FiniteFunction restrict_argument(const FiniteFunction& f, std::size_t position, std::size_t symbol) {
  if (position >= f.arity) throw std::out_of_range("restrict_argument: position outside the arity");
  if (symbol >= f.alphabet) throw std::out_of_range("restrict_argument: symbol outside the alphabet");
  return FiniteFunction::from(
      f.alphabet, f.arity - 1,
      [&](std::span<const std::size_t> w) {
        std::vector<std::size_t> full(w.begin(), w.end());
        full.insert(full.begin() + static_cast<std::ptrdiff_t>(position), symbol);
        return f(full);
      },
      f.table.size());
}

std::vector<std::size_t> merge_words(std::span<const std::size_t> a, std::span<const std::size_t> wa,
                                     std::span<const std::size_t> b, std::span<const std::size_t> wb) {
  if (a.size() != wa.size() || b.size() != wb.size()) throw ShapeError("merge_words: word length mismatch");
  std::vector<std::size_t> out(a.size() + b.size());
  for (std::size_t t = 0; t < a.size(); ++t) out.at(a[t]) = wa[t];
  for (std::size_t t = 0; t < b.size(); ++t) out.at(b[t]) = wb[t];
  return out;
}

namespace {

std::vector<std::size_t> digits(std::size_t index, std::size_t len, std::size_t base) {
  std::vector<std::size_t> w(len);
  for (std::size_t i = len; i-- > 0;) {
    w[i] = index % base;
    index /= base;
  }
  return w;
}

std::vector<std::size_t> complement(std::span<const std::size_t> a, std::size_t n) {
  std::vector<std::uint8_t> in(n, 0);
  for (std::size_t p : a) {
    if (p >= n) throw std::out_of_range("split matrix: position outside the arity");
    if (in[p]) throw std::invalid_argument("split matrix: repeated position");
    in[p] = 1;
  }
  std::vector<std::size_t> b;
  for (std::size_t p = 0; p < n; ++p)
    if (!in[p]) b.push_back(p);
  return b;
}

std::size_t floor_log2(std::size_t v) {
  std::size_t r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

// Visits r-subsets of [0, n) in lexicographic order until `visit` returns true.
template <class Visit>
bool for_each_subset(std::size_t n, std::size_t r, Visit visit) {
  if (r > n) return false;
  std::vector<std::size_t> idx(r);
  for (std::size_t t = 0; t < r; ++t) idx[t] = t;
  while (true) {
    if (visit(idx)) return true;
    std::size_t t = r;
    while (t > 0 && idx[t - 1] == n - r + (t - 1)) --t;
    if (t == 0) return false;
    ++idx[t - 1];
    for (std::size_t u = t; u < r; ++u) idx[u] = idx[u - 1] + 1;
  }
}

} // namespace

SplitMatrix build_split_matrix(const FiniteFunction& f, std::span<const std::size_t> a) {
  f.validate();
  SplitMatrix m;
  m.a.assign(a.begin(), a.end());
  std::sort(m.a.begin(), m.a.end());
  m.b = complement(m.a, f.arity);
  m.rows = word_count(f.alphabet, m.a.size(), f.table.size());
  m.cols = word_count(f.alphabet, m.b.size(), f.table.size());
  m.entries.resize(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const std::vector<std::size_t> wa = digits(r, m.a.size(), f.alphabet);
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::vector<std::size_t> wb = digits(c, m.b.size(), f.alphabet);
      m.entries[r * m.cols + c] = static_cast<std::uint8_t>(f(merge_words(m.a, wa, m.b, wb)));
    }
  }
  return m;
}

ColumnVC vc_dim_of_columns(const SplitMatrix& m, const SearchBudget& budget) {
  ColumnVC out;
  if (m.cols == 0 || m.rows == 0) return out;
  out.certificate = {0};

  // Distinct columns, first occurrence kept.
  std::vector<std::size_t> distinct;
  {
    std::map<std::string, std::size_t> seen;
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::string key(m.rows, '0');
      for (std::size_t r = 0; r < m.rows; ++r) key[r] = static_cast<char>('0' + m.at(r, c));
      if (seen.emplace(std::move(key), c).second) distinct.push_back(c);
    }
  }
  const std::size_t limit = std::min(m.rows, floor_log2(distinct.size()));
  std::size_t examined = 0;
  for (std::size_t r = 1; r <= limit; ++r) {
    std::vector<std::size_t> witness_cols(std::size_t{1} << r);
    std::vector<std::uint8_t> hit(std::size_t{1} << r);
    const bool found = for_each_subset(m.rows, r, [&](const std::vector<std::size_t>& rows) {
      if (++examined > budget.max_subsets) {
        throw BudgetError("vc_dim_of_columns: more than " + std::to_string(budget.max_subsets) +
                          " row subsets examined");
      }
      std::fill(hit.begin(), hit.end(), 0);
      std::size_t covered = 0;
      for (std::size_t c : distinct) {
        std::size_t pattern = 0;
        for (std::size_t t = 0; t < r; ++t) pattern |= static_cast<std::size_t>(m.at(rows[t], c)) << t;
        if (!hit[pattern]) {
          hit[pattern] = 1;
          witness_cols[pattern] = c;
          if (++covered == hit.size()) {
            out.value = r;
            out.rows = rows;
            out.certificate = witness_cols;
            return true;
          }
        }
      }
      return false;
    });
    if (!found) break;
  }
  return out;
}

bool SplitVCReport::self_check(const FiniteFunction& f) const {
  if (certificate.size() != (std::size_t{1} << shattered_rows.size())) return false;
  const std::vector<std::size_t> b = complement(witness, f.arity);
  for (std::size_t pattern = 0; pattern < certificate.size(); ++pattern)
    for (std::size_t t = 0; t < shattered_rows.size(); ++t) {
      const int want = static_cast<int>((pattern >> t) & 1U);
      if (f(merge_words(witness, shattered_rows[t], b, certificate[pattern])) != want) return false;
    }
  return true;
}

nlohmann::json SplitVCReport::to_json() const {
  nlohmann::json j;
  j["value"] = value;
  std::vector<std::size_t> a1;
  for (std::size_t p : witness) a1.push_back(p + 1);
  j["witness"] = a1;
  j["shattered_rows"] = shattered_rows;
  nlohmann::json cert = nlohmann::json::array();
  for (std::size_t pattern = 0; pattern < certificate.size(); ++pattern) {
    std::string bits;
    for (std::size_t t = 0; t < shattered_rows.size(); ++t) bits += ((pattern >> t) & 1U) ? '1' : '0';
    cert.push_back({{"pattern", bits}, {"column", certificate[pattern]}});
  }
  j["certificate"] = std::move(cert);
  return j;
}

SplitVCReport split_vc(const FiniteFunction& f, const SearchBudget& budget) {
  f.validate();
  if (f.table.size() > budget.max_entries) {
    throw BudgetError("split_vc: " + std::to_string(f.table.size()) + " matrix entries exceed the cap of " +
                      std::to_string(budget.max_entries));
  }
  if (f.arity >= 8 * sizeof(std::size_t)) throw BudgetError("split_vc: arity too large");

  bool have = false;
  SplitVCReport best;
  ColumnVC best_vc;
  SplitMatrix best_m;
  for (std::size_t mask = 0; mask < (std::size_t{1} << f.arity); ++mask) {
    std::vector<std::size_t> a;
    for (std::size_t p = 0; p < f.arity; ++p)
      if ((mask >> p) & 1U) a.push_back(p);
    if (have) {
      const std::size_t rows = word_count(f.alphabet, a.size(), f.table.size());
      const std::size_t cols = f.table.size() / rows;
      const std::size_t bound = std::min(floor_log2(cols), rows);
      const bool later = std::lexicographical_compare(best.witness.begin(), best.witness.end(), a.begin(), a.end());
      if (bound < best.value || (bound == best.value && later)) continue;
    }
    SplitMatrix m = build_split_matrix(f, a);
    ColumnVC vc = vc_dim_of_columns(m, budget);
    const bool better =
        !have || vc.value > best.value ||
        (vc.value == best.value && std::lexicographical_compare(a.begin(), a.end(), best.witness.begin(),
                                                                best.witness.end()));
    if (better) {
      have = true;
      best.value = vc.value;
      best.witness = a;
      best_vc = std::move(vc);
      best_m = std::move(m);
    }
  }

  best.shattered_rows.clear();
  best.certificate.clear();
  for (std::size_t r : best_vc.rows) best.shattered_rows.push_back(digits(r, best_m.a.size(), f.alphabet));
  for (std::size_t c : best_vc.certificate) best.certificate.push_back(digits(c, best_m.b.size(), f.alphabet));
  if (best.value == 0 && best_m.cols == 0) best.certificate.clear();
  return best;
}

// ---------------------------------------------------------------------------
// Lemma functions and certificates.

FiniteFunction ind_function(std::size_t n) {
  if (n < 1) throw std::invalid_argument("ind_function: n must be >= 1");
  return FiniteFunction::from(n, n + 1, [](std::span<const std::size_t> w) { return w[1 + w[0]] == 0 ? 1 : 0; });
}

std::size_t sum2_value(std::size_t ell, std::size_t symbol) {
  const std::size_t m = 2 * ell;
  if (symbol >= m - 2) throw std::out_of_range("sum2_value: symbol outside the alphabet");
  const std::size_t v = symbol + 1;
  return v < m - 2 ? v : m - 1;
}

namespace {

bool sum2_eval(std::span<const std::size_t> values, std::size_t m) {
  for (std::size_t j = 0; j < values.size(); ++j)
    for (std::size_t k = 0; k < values.size(); ++k)
      if ((values[j] + values[k] + 1) % m == 0) return true;
  return false;
}

bool disj_eval(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && b[i]) return true;
  return false;
}

} // namespace

FiniteFunction sum2_function(std::size_t ell) {
  if (ell < 2) throw std::invalid_argument("sum2_function: ell must be >= 2");
  return FiniteFunction::from(2 * ell - 2, ell, [ell](std::span<const std::size_t> w) {
    std::vector<std::size_t> v;
    for (std::size_t s : w) v.push_back(sum2_value(ell, s));
    return sum2_eval(v, 2 * ell) ? 1 : 0;
  });
}

FiniteFunction disj_function(std::size_t m) {
  if (m < 1) throw std::invalid_argument("disj_function: m must be >= 1");
  return FiniteFunction::from(2, 2 * m, [m](std::span<const std::size_t> w) {
    return disj_eval(w.subspan(0, m), w.subspan(m)) ? 1 : 0;
  });
}

const char* lemma_name(Lemma l) noexcept {
  switch (l) {
  case Lemma::Ind: return "ind";
  case Lemma::Sum2: return "sum2";
  case Lemma::Disj: return "disj";
  }
  return "unknown";
}

nlohmann::json LemmaCertificate::to_json() const {
  std::vector<std::size_t> a1;
  for (std::size_t p : a) a1.push_back(p + 1);
  return {{"lemma", lemma_name(lemma)}, {"size", size},   {"pass", pass},      {"a", a1},
          {"rows", rows},               {"columns", columns}, {"detail", detail}};
}

LemmaCertificate check_lemma_certificate(Lemma lemma, std::size_t size) {
  LemmaCertificate cert;
  cert.lemma = lemma;
  cert.size = size;
  std::size_t k = 0;
  // eval(row, column) on lemma values, with the row on A = {first positions}.
  std::function<bool(const std::vector<std::size_t>&, const std::vector<std::size_t>&)> eval;

  switch (lemma) {
  case Lemma::Ind: {
    if (size < 2 || size > 6) throw std::invalid_argument("Ind certificate: n must lie in [2, 6]");
    const std::size_t n = size;
    k = n;
    cert.a = {0};
    for (std::size_t i = 1; i <= n; ++i) cert.rows.push_back({i});
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
      std::vector<std::size_t> q(n);
      for (std::size_t i = 0; i < n; ++i) q[i] = ((pattern >> i) & 1U) ? 1 : 2;
      cert.columns.push_back(q);
    }
    eval = [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& q) { return q.at(p[0] - 1) == 1; };
    break;
  }
  case Lemma::Sum2: {
    if (size < 4 || size > 8 || size % 2 != 0) throw std::invalid_argument("Sum2 certificate: l must be even in [4, 8]");
    const std::size_t ell = size;
    const std::size_t m = 2 * ell;
    k = ell / 2;
    for (std::size_t i = 0; i < k; ++i) cert.a.push_back(i);
    for (std::size_t i = 1; i <= k; ++i) {
      std::vector<std::size_t> p(k, 1);
      p[i - 1] = 2 * i;
      cert.rows.push_back(p);
    }
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
      std::vector<std::size_t> q(k);
      for (std::size_t i = 1; i <= k; ++i) q[i - 1] = ((pattern >> (i - 1)) & 1U) ? 2 * ell - 2 * i - 1 : 1;
      cert.columns.push_back(q);
    }
    eval = [m](const std::vector<std::size_t>& p, const std::vector<std::size_t>& q) {
      std::vector<std::size_t> all(p);
      all.insert(all.end(), q.begin(), q.end());
      for (std::size_t v : all)
        if (v < 1 || v > m - 1 || v == m - 2) throw std::logic_error("Sum2 certificate: value outside the domain");
      return sum2_eval(all, m);
    };
    break;
  }
  case Lemma::Disj: {
    if (size < 1 || size > 10) throw std::invalid_argument("Disj certificate: m must lie in [1, 10]");
    const std::size_t m = size;
    k = m;
    for (std::size_t i = 0; i < m; ++i) cert.a.push_back(i);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<std::size_t> a(m, 0);
      a[i] = 1;
      cert.rows.push_back(a);
    }
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
      std::vector<std::size_t> b(m);
      for (std::size_t i = 0; i < m; ++i) b[i] = (pattern >> i) & 1U;
      cert.columns.push_back(b);
    }
    eval = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) { return disj_eval(a, b); };
    break;
  }
  }

  cert.pass = true;
  for (std::size_t pattern = 0; pattern < cert.columns.size() && cert.pass; ++pattern)
    for (std::size_t t = 0; t < k; ++t) {
      const bool want = (pattern >> t) & 1U;
      if (eval(cert.rows[t], cert.columns[pattern]) != want) {
        cert.pass = false;
        cert.detail = "row " + std::to_string(t + 1) + " disagrees with pattern " + std::to_string(pattern);
        break;
      }
    }
  if (cert.pass) cert.detail = std::to_string(k) + " rows shattered by " + std::to_string(cert.columns.size()) + " columns";
  return cert;
}

// ---------------------------------------------------------------------------
// Text format.

FiniteFunction parse_truth_table(std::istream& in) {
  std::string line;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      const auto first = out.find_first_not_of(" \t\r");
      if (first != std::string::npos && out[first] != '#') return true;
    }
    return false;
  };
  if (!next_line(line)) throw std::invalid_argument("truth table: missing header");
  FiniteFunction f;
  {
    std::istringstream hs(line);
    long long alphabet = 0, arity = -1;
    if (!(hs >> alphabet >> arity) || alphabet < 1 || arity < 0) {
      throw std::invalid_argument("truth table: header must be '<alphabet> <arity>'");
    }
    f.alphabet = static_cast<std::size_t>(alphabet);
    f.arity = static_cast<std::size_t>(arity);
  }
  f.table.assign(word_count(f.alphabet, f.arity, std::size_t{1} << 24), 0);
  std::vector<std::uint8_t> seen(f.table.size(), 0);
  std::size_t lineno = 1;
  while (next_line(line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    std::vector<std::size_t> word;
    std::string bit;
    const auto where = " on line " + std::to_string(lineno);
    if (tok.size() == 2 && f.alphabet <= 10 && tok[0].size() == f.arity && f.arity != 1) {
      for (char c : tok[0]) {
        if (c < '0' || c > '9') throw std::invalid_argument("truth table: bad digit" + where);
        word.push_back(static_cast<std::size_t>(c - '0'));
      }
      bit = tok[1];
    } else if (tok.size() == f.arity + 1) {
      for (std::size_t t = 0; t < f.arity; ++t) {
        try {
          std::size_t used = 0;
          const unsigned long v = std::stoul(tok[t], &used);
          if (used != tok[t].size()) throw std::invalid_argument("");
          word.push_back(v);
        } catch (const std::exception&) {
          throw std::invalid_argument("truth table: bad symbol '" + tok[t] + "'" + where);
        }
      }
      bit = tok.back();
    } else {
      throw std::invalid_argument("truth table: expected " + std::to_string(f.arity) + " symbols and a bit" + where);
    }
    if (bit != "0" && bit != "1") throw std::invalid_argument("truth table: bit must be 0 or 1" + where);
    for (std::size_t s : word)
      if (s >= f.alphabet) throw std::invalid_argument("truth table: symbol outside the alphabet" + where);
    const std::size_t idx = f.index(word);
    if (seen[idx]) throw std::invalid_argument("truth table: repeated word" + where);
    seen[idx] = 1;
    f.table[idx] = bit == "1" ? 1 : 0;
  }
  const auto missing = std::count(seen.begin(), seen.end(), 0);
  if (missing != 0) throw std::invalid_argument("truth table: " + std::to_string(missing) + " words missing");
  return f;
}

void write_truth_table(std::ostream& out, const FiniteFunction& f) {
  f.validate();
  out << f.alphabet << ' ' << f.arity << '\n';
  for (std::size_t idx = 0; idx < f.table.size(); ++idx) {
    for (std::size_t s : f.word(idx)) out << s << ' ';
    out << static_cast<int>(f.table[idx]) << '\n';
  }
}

} // namespace sattn
