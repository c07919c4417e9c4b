#include <doctest.h>

#include <vector>

#include "sattn/constructions.hpp"
#include "sattn/rng.hpp"

using namespace sattn;

namespace {

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

std::vector<std::uint8_t> transpose(const std::vector<std::uint8_t>& r, std::size_t m) {
  std::vector<std::uint8_t> t(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) t[j * m + i] = r[i * m + j];
  return t;
}

std::vector<int> run_sign(const TransformerSpec& spec, const std::vector<std::int64_t>& word) {
  std::vector<int> out;
  for (double y : forward(encode(word, spec, false), spec)) out.push_back(readout_sign(y));
  return out;
}

const std::vector<std::uint8_t> kTable2 = bits({0, 0, 1, 1, 0, 0, //
                                                0, 1, 1, 0, 0, 0, //
                                                1, 0, 1, 0, 1, 0, //
                                                0, 0, 0, 0, 0, 0, //
                                                0, 0, 1, 1, 0, 0, //
                                                1, 0, 0, 0, 0, 0});

const std::vector<std::uint8_t> kTable4 = bits({0, 1, 1, 1, 1, 0, 0, //
                                                0, 0, 0, 0, 0, 1, 1, //
                                                1, 1, 0, 0, 1, 1, 0, //
                                                0, 0, 0, 0, 0, 1, 1, //
                                                1, 0, 0, 0, 0, 1, 1, //
                                                0, 0, 1, 1, 0, 0, 1, //
                                                0, 1, 0, 0, 0, 1, 0});

} // namespace

TEST_CASE("function composition construction") {
  const FuncCompInstance inst{{2, 3, 1}, {3, 1, 2}, 2};
  CHECK(funccomp_answer(inst) == 2);
  const TransformerSpec spec = build_funccomp(3);
  const std::vector<std::int64_t> word = funccomp_word(inst);
  const Matrix x = encode(word, spec, false);
  CHECK(readout_nearest_int(forward(x, spec).back()) == 2);

  SUBCASE("score argmax at the query token") {
    const Matrix s = pair_scores(x, spec.heads[0]);
    const std::size_t q = 6, tokens = 7;
    std::size_t best = 0;
    for (std::size_t t = 1; t < tokens * tokens; ++t)
      if (s(q, t) > s(q, best)) best = t;
    // 1-based j = x = 2 and k = n + g(x) = 6.
    CHECK(best / tokens + 1 == 2);
    CHECK(best % tokens + 1 == 6);
    std::int64_t top = funccomp_exact_score(inst, q, 0, 0);
    for (std::size_t j = 0; j < tokens; ++j)
      for (std::size_t k = 0; k < tokens; ++k) top = std::max(top, funccomp_exact_score(inst, q, j, k));
    CHECK(funccomp_exact_score(inst, q, 1, 5) == top);
  }
  SUBCASE("identity maps return x") {
    for (std::int64_t v = 1; v <= 4; ++v) {
      const FuncCompInstance id{{1, 2, 3, 4}, {1, 2, 3, 4}, v};
      const TransformerSpec s4 = build_funccomp(4);
      CHECK(readout_nearest_int(forward(encode(funccomp_word(id), s4, false), s4).back()) == v);
    }
  }
  SUBCASE("random instances on both paths") {
    RngStream rng(71);
    std::vector<FuncCompInstance> batch;
    for (std::size_t n = 2; n <= 10; ++n)
      for (int t = 0; t < 10; ++t) batch.push_back(random_funccomp(n, rng));
    for (StrassenPath path : {StrassenPath::Naive, StrassenPath::Fast}) {
      const ConstructionReport r = verify_funccomp(batch, {}, path);
      CHECK(r.tried == batch.size());
      CHECK(r.all_exact());
      CHECK(r.min_margin > 0.0);
    }
  }
}

TEST_CASE("binary relation construction") {
  SUBCASE("swap composed with itself") {
    const BinRelInstance inst{2, bits({0, 1, 1, 0}), bits({0, 1, 1, 0})};
    CHECK(binrel_answer(inst) == std::vector<int>{1, 0, 0, 1});
    CHECK(run_sign(build_binrel(2), binrel_word(inst)) == std::vector<int>{1, 0, 0, 1});
  }
  SUBCASE("empty A gives no witnesses") {
    const BinRelInstance inst{3, std::vector<std::uint8_t>(9, 0), std::vector<std::uint8_t>(9, 1)};
    CHECK(run_sign(build_binrel(3), binrel_word(inst)) == std::vector<int>(9, 0));
  }
  SUBCASE("table example") {
    const BinRelInstance inst{6, kTable2, kTable2};
    const std::vector<int> got = run_sign(build_binrel(6), binrel_word(inst));
    CHECK(got == binrel_answer(inst));
    CHECK(got[0 * 6 + 4] == 1);
    CHECK(got[5 * 6 + 0] == 0);
  }
  SUBCASE("exhaustive m = 2") {
    std::vector<BinRelInstance> all;
    for (unsigned a = 0; a < 16; ++a)
      for (unsigned b = 0; b < 16; ++b) {
        BinRelInstance inst{2, {}, {}};
        for (unsigned t = 0; t < 4; ++t) {
          inst.a.push_back((a >> t) & 1U);
          inst.b.push_back((b >> t) & 1U);
        }
        all.push_back(inst);
      }
    const ConstructionReport r = verify_binrel(all);
    CHECK(r.tried == 256);
    CHECK(r.all_exact());
  }
  SUBCASE("random on the fast path") {
    RngStream rng(72);
    std::vector<BinRelInstance> batch;
    for (std::size_t m = 3; m <= 5; ++m)
      for (int t = 0; t < 5; ++t) batch.push_back(random_binrel(m, 0.4, rng));
    CHECK(verify_binrel(batch, {}, StrassenPath::Fast).all_exact());
  }
}

TEST_CASE("match3 construction") {
  SUBCASE("table prefix") {
    const Match3Instance inst{37, {6, 9, 9, 9, 7, 10, 9, 34, 9, 9, 30}};
    const std::vector<int> truth = match3_answer(inst);
    CHECK(truth[5] == 1);
    CHECK(10 + 34 + 30 == 2 * 37);
    const TransformerSpec spec = build_match3(inst.p.size(), 37);
    CHECK(run_sign(spec, match3_word(inst)) == truth);
  }
  SUBCASE("all ones") {
    const Match3Instance inst{37, std::vector<std::int64_t>(8, 1)};
    CHECK(run_sign(build_match3(8, 37), match3_word(inst)) == std::vector<int>(8, 0));
  }
  SUBCASE("zero tokens need the zero head") {
    const Match3Instance inst{37, {0, 5, 9, 12}};
    const std::vector<int> truth = match3_answer(inst);
    CHECK(truth[0] == 1);
    CHECK(run_sign(build_match3(4, 37, true), match3_word(inst)) == truth);
  }
  SUBCASE("random arrays against the triple scan") {
    RngStream rng(73);
    std::vector<Match3Instance> batch;
    for (std::size_t n = 3; n <= 12; ++n)
      for (int t = 0; t < 20; ++t) batch.push_back(random_match3(n, static_cast<std::int64_t>(2 * n - 2), rng));
    const ConstructionReport r = verify_match3(batch);
    CHECK(r.tried == 200);
    CHECK(r.all_exact());
  }
}

TEST_CASE("quotient construction") {
  SUBCASE("table example") {
    const std::vector<std::int64_t> col{5, 4, 5, 1, 2, 2, 3};
    const QuotientInstance inst{7, kTable4, transpose(kTable4, 7), col};
    const std::vector<int> truth = quotient_answer(inst);
    CHECK(truth[2 * 7 + 4] == 1);
    const std::vector<int> got = run_sign(build_quotient(7), quotient_word(inst));
    CHECK(got == truth);
  }
  SUBCASE("injective colouring has no witnesses") {
    RngStream rng(74);
    const std::size_t m = 5;
    QuotientInstance inst = random_quotient(m, 0.6, rng);
    inst.b = inst.a;
    for (std::size_t k = 0; k < m; ++k) inst.col[k] = static_cast<std::int64_t>(k + 1);
    CHECK(run_sign(build_quotient(m), quotient_word(inst)) == std::vector<int>(m * m, 0));
  }
  SUBCASE("random instances on both paths") {
    RngStream rng(75);
    std::vector<QuotientInstance> batch;
    for (std::size_t m = 2; m <= 6; ++m)
      for (int t = 0; t < 8; ++t) batch.push_back(random_quotient(m, 0.5, rng));
    for (StrassenPath path : {StrassenPath::Naive, StrassenPath::Fast}) {
      const ConstructionReport r = verify_quotient(batch, {}, path);
      CHECK(r.all_exact());
      CHECK(r.argmax_mismatches == 0);
    }
  }
}

TEST_CASE("common rescaling of the score projections keeps the argmax") {
  const FuncCompInstance inst{{3, 1, 4, 2}, {2, 4, 1, 3}, 3};
  TransformerSpec spec = build_funccomp(4);
  const Matrix x = encode(funccomp_word(inst), spec, false);
  const Matrix a = pair_scores(x, spec.heads[0]);
  for (std::size_t w = 0; w < 3; ++w) spec.heads[0].weights[w] = scaled(spec.heads[0].weights[w], 0.37);
  const Matrix b = pair_scores(x, spec.heads[0]);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t ba = 0, bb = 0;
    for (std::size_t t = 1; t < a.cols(); ++t) {
      if (a(i, t) > a(i, ba)) ba = t;
      if (b(i, t) > b(i, bb)) bb = t;
    }
    CHECK(ba == bb);
  }
}

TEST_CASE("reports serialize") {
  RngStream rng(76);
  const ConstructionReport r = verify_funccomp({random_funccomp(3, rng)});
  const nlohmann::json j = r.to_json();
  CHECK(j.at("tried") == 1);
  CHECK(j.at("exact") == 1);
  CHECK(j.contains("min_margin"));
}
