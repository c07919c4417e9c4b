#include "sattn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sattn/bench.hpp"
#include "sattn/constructions.hpp"
#include "sattn/errors.hpp"
#include "sattn/gradcheck.hpp"
#include "sattn/rng.hpp"
#include "sattn/split_vc.hpp"
#include "sattn/tasks.hpp"
#include "sattn/trainer.hpp"

namespace sattn {

namespace {

using nlohmann::json;

// Input problems found after parsing; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p = resolve_output(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot open " + p.string() + " for writing");
  return f;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open " + path);
  return f;
}

Task task_arg(const std::string& name) {
  const auto t = parse_task(name);
  if (!t) throw UsageError("unknown task '" + name + "'");
  return *t;
}

Mechanism mechanism_arg(const std::string& name) {
  const auto m = parse_mechanism(name);
  if (!m) throw UsageError("unknown mechanism '" + name + "'");
  return *m;
}

StrassenPath path_arg(const std::string& name) {
  if (name == "naive") return StrassenPath::Naive;
  if (name == "fast") return StrassenPath::Fast;
  throw UsageError("path must be naive or fast");
}

// ---- gen ----

struct GenArgs {
  std::string task;
  std::uint64_t seed = 1;
  std::size_t count = 0;
  std::string out;
  std::size_t nmin = 0;
  std::size_t nmax = 0;
  double p = -1.0;
  std::int64_t modulus = 37;
};

int run_gen(const GenArgs& a, std::ostream& out) {
  RngStream rng(a.seed);
  std::vector<TaskInstance> data;
  const auto range = [&](auto& cfg) {
    if (a.nmin) cfg.nmin = a.nmin;
    if (a.nmax) cfg.nmax = a.nmax;
  };
  switch (task_arg(a.task)) {
  case Task::FuncComp: {
    FuncCompGen cfg;
    range(cfg);
    data = gen_funccomp(rng, a.count, cfg);
    break;
  }
  case Task::BinRel: {
    BinRelGen cfg;
    range(cfg);
    if (a.p >= 0) cfg.p = a.p;
    data = gen_binrel(rng, a.count, cfg);
    break;
  }
  case Task::Match3: {
    Match3Gen cfg;
    range(cfg);
    cfg.modulus = a.modulus;
    data = gen_match3(rng, a.count, cfg);
    break;
  }
  case Task::Quotient: {
    QuotientGen cfg;
    range(cfg);
    if (a.p >= 0) cfg.p = a.p;
    data = gen_quotient(rng, a.count, cfg);
    break;
  }
  case Task::DisjReduction: throw UsageError("disj_reduction instances come from build_disj_instance, not gen");
  }
  if (a.out.empty()) {
    write_jsonl(out, data);
  } else {
    std::ofstream f = open_output(a.out);
    write_jsonl(f, data);
  }
  return kExitOk;
}

// ---- verify ----

struct VerifyArgs {
  std::string task;
  std::string instances;
  std::size_t random = 0;
  std::uint64_t seed = 1;
  std::string path = "naive";
  std::string report;
};

TheoryTask theory_arg(const std::string& name) {
  for (TheoryTask t : {TheoryTask::FuncComp, TheoryTask::BinRel, TheoryTask::Match3, TheoryTask::Quotient})
    if (name == theory_task_name(t)) return t;
  throw UsageError("verify: task must be funccomp, binrel, match3 or quotient");
}

// Dataset instances in construction form, with the dataset labels implied by
// the construction's answer recorded for comparison.
struct Converted {
  std::vector<FuncCompInstance> funccomp;
  std::vector<BinRelInstance> binrel;
  std::vector<Match3Instance> match3;
  std::vector<QuotientInstance> quotient;
};

Converted convert(TheoryTask task, const std::vector<TaskInstance>& data) {
  Converted c;
  for (const TaskInstance& inst : data) {
    switch (task) {
    case TheoryTask::FuncComp: {
      if (inst.task != Task::FuncComp) throw UsageError("verify: instance task differs from funccomp");
      // x = (bottom, f(0..n-1)); f(f(0)) is h(g(1)) with g = h = f + 1.
      FuncCompInstance fc;
      for (std::size_t t = 1; t < inst.x.size(); ++t) fc.g.push_back(inst.x[t] + 1);
      fc.h = fc.g;
      fc.x = 1;
      c.funccomp.push_back(std::move(fc));
      break;
    }
    case TheoryTask::BinRel: {
      if (inst.task != Task::BinRel || !inst.meta.m) throw UsageError("verify: expected binrel instances");
      BinRelInstance br;
      br.m = *inst.meta.m;
      for (std::int64_t v : inst.x) br.a.push_back(static_cast<std::uint8_t>(v != 0));
      br.b = br.a;
      c.binrel.push_back(std::move(br));
      break;
    }
    case TheoryTask::Match3: {
      if (inst.task != Task::Match3 || !inst.meta.modulus) throw UsageError("verify: expected match3 instances");
      c.match3.push_back({*inst.meta.modulus, inst.x});
      break;
    }
    case TheoryTask::Quotient: {
      if (inst.task != Task::Quotient && inst.task != Task::DisjReduction)
        throw UsageError("verify: expected quotient instances");
      c.quotient.push_back(to_quotient_instance(inst));
      break;
    }
    }
  }
  return c;
}

// Count of instances whose stored labels agree with the brute-force answer of
// the construction form.
std::size_t label_agreement(TheoryTask task, const std::vector<TaskInstance>& data, const Converted& c) {
  std::size_t agree = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::int64_t> want;
    switch (task) {
    case TheoryTask::FuncComp: want = {funccomp_answer(c.funccomp[i]) == 1 ? 1 : 0}; break;
    case TheoryTask::BinRel:
      for (int v : binrel_answer(c.binrel[i])) want.push_back(v);
      break;
    case TheoryTask::Match3:
      for (int v : match3_answer(c.match3[i])) want.push_back(v);
      break;
    case TheoryTask::Quotient: {
      const auto ans = quotient_answer(c.quotient[i]);
      const std::size_t m = c.quotient[i].m;
      for (std::size_t t = 0; t < ans.size(); ++t) want.push_back(t / m == t % m ? kMaskedLabel : ans[t]);
      break;
    }
    }
    if (want == data[i].y) ++agree;
  }
  return agree;
}

Converted random_instances(TheoryTask task, std::size_t count, std::uint64_t seed) {
  RngStream rng(seed);
  Converted c;
  for (std::size_t i = 0; i < count; ++i) {
    switch (task) {
    case TheoryTask::FuncComp: c.funccomp.push_back(random_funccomp(2 + i % 9, rng)); break;
    case TheoryTask::BinRel: c.binrel.push_back(random_binrel(2 + i % 5, 0.5, rng)); break;
    case TheoryTask::Match3: {
      const std::size_t n = 3 + (i / 2) % 10;
      const std::int64_t modulus = i % 2 == 0 ? static_cast<std::int64_t>(2 * n - 2) : 37;
      c.match3.push_back(random_match3(n, modulus, rng));
      break;
    }
    case TheoryTask::Quotient: c.quotient.push_back(random_quotient(2 + i % 5, 0.5, rng)); break;
    }
  }
  return c;
}

int run_verify(const VerifyArgs& a, std::ostream& out) {
  const TheoryTask task = theory_arg(a.task);
  const StrassenPath path = path_arg(a.path);
  Converted c;
  json extra = json::object();
  bool labels_ok = true;
  if (!a.instances.empty()) {
    std::ifstream f = open_input(a.instances);
    const std::vector<TaskInstance> data = read_jsonl(f);
    c = convert(task, data);
    const std::size_t agree = label_agreement(task, data, c);
    extra["label_agreement"] = agree;
    extra["instances"] = data.size();
    labels_ok = agree == data.size();
  } else {
    c = random_instances(task, a.random, a.seed);
  }
  ConstructionReport r;
  switch (task) {
  case TheoryTask::FuncComp: r = verify_funccomp(c.funccomp, {}, path); break;
  case TheoryTask::BinRel: r = verify_binrel(c.binrel, {}, path); break;
  case TheoryTask::Match3: r = verify_match3(c.match3, {}, path); break;
  case TheoryTask::Quotient: r = verify_quotient(c.quotient, {}, path); break;
  }
  json report = r.to_json();
  report["path"] = a.path;
  for (auto it = extra.begin(); it != extra.end(); ++it) report[it.key()] = it.value();
  const bool pass = r.all_exact() && labels_ok;
  report["pass"] = pass;
  if (!a.report.empty()) {
    std::ofstream f = open_output(a.report);
    f << report.dump(2) << '\n';
  }
  out << report.dump(2) << '\n';
  return pass ? kExitOk : kExitFailed;
}

// ---- splitvc ----

struct SplitVCArgs {
  std::string table;
  std::string lemma;
  std::size_t param = 0;
};

int run_splitvc(const SplitVCArgs& a, std::ostream& out) {
  if (!a.table.empty()) {
    std::ifstream f = open_input(a.table);
    const FiniteFunction fn = parse_truth_table(f);
    const SplitVCReport r = split_vc(fn);
    json j = r.to_json();
    const bool ok = r.self_check(fn);
    j["certificate_valid"] = ok;
    out << j.dump(2) << '\n';
    return ok ? kExitOk : kExitFailed;
  }
  Lemma lemma;
  if (a.lemma == "ind")
    lemma = Lemma::Ind;
  else if (a.lemma == "sum2")
    lemma = Lemma::Sum2;
  else if (a.lemma == "disj")
    lemma = Lemma::Disj;
  else
    throw UsageError("splitvc: --lemma must be ind, sum2 or disj");
  LemmaCertificate cert;
  try {
    cert = check_lemma_certificate(lemma, a.param);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json j = cert.to_json();
  const std::size_t bound = cert.rows.size();
  j["lower_bound"] = bound;
  j["value"] = bound;
  // Exhaustive value when the search fits the default budget.
  try {
    const FiniteFunction fn = lemma == Lemma::Ind    ? ind_function(a.param)
                              : lemma == Lemma::Sum2 ? sum2_function(a.param)
                                                     : disj_function(a.param);
    const SplitVCReport r = split_vc(fn);
    j["exhaustive"] = r.to_json();
    j["value"] = r.value;
  } catch (const BudgetError&) {
    j["exhaustive"] = nullptr;
  }
  out << j.dump(2) << '\n';
  return cert.pass ? kExitOk : kExitFailed;
}

// ---- gradcheck ----

struct GradArgs {
  std::string mechanism = "strassen";
  std::size_t n = 4;
  std::size_t d = 3;
  std::size_t points = 20;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tol = 1e-5;
  bool layer = false;
};

int run_gradcheck(const GradArgs& a, std::ostream& out) {
  const Mechanism kind = mechanism_arg(a.mechanism);
  if (a.eps <= 0.0 || a.eps > 1e-2) throw UsageError("gradcheck: --eps must lie in (0, 1e-2]");
  GradCheckResult r;
  try {
    r = a.layer ? gradcheck_layer(kind, a.n, a.d, a.points, a.seed, a.eps)
                : gradcheck_attention(kind, a.n, a.d, a.points, a.seed, a.eps);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const bool pass = r.max_rel_error <= a.tol;
  out << json{{"mechanism", mechanism_name(kind)},
              {"scope", a.layer ? "layer" : "head"},
              {"n", a.n},
              {"d", a.d},
              {"points", r.points},
              {"entries", r.entries},
              {"eps", a.eps},
              {"max_rel_error", r.max_rel_error},
              {"tolerance", a.tol},
              {"pass", pass}}
             .dump(2)
      << '\n';
  return pass ? kExitOk : kExitFailed;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::vector<std::string> set;
  std::string task;
  std::string mechanism;
  std::string preset;
  std::string metrics;
  std::string checkpoint;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  std::map<std::string, std::string> kv;
  if (!a.config.empty()) {
    std::ifstream f = open_input(a.config);
    kv = parse_key_values(f);
  }
  // Flags win over the file.
  for (const std::string& s : a.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("train: --set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (!a.task.empty()) kv["task"] = a.task;
  if (!a.mechanism.empty()) kv["mechanism"] = a.mechanism;
  if (!a.preset.empty()) kv["preset"] = a.preset;
  if (!a.metrics.empty()) kv["metrics"] = a.metrics;
  if (!a.checkpoint.empty()) kv["checkpoint"] = a.checkpoint;

  const auto take = [&](const std::string& key, const std::string& fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const Task task = task_arg(take("task", "funccomp"));
  const Mechanism mechanism = mechanism_arg(take("mechanism", "strassen"));
  const std::string preset = take("preset", "desk");
  TrainConfig cfg;
  if (preset == "paper")
    cfg = TrainConfig::paper(task, mechanism);
  else if (preset == "desk")
    cfg = TrainConfig::desk(task, mechanism);
  else
    throw UsageError("train: preset must be paper or desk");
  if (kv.count("metrics")) kv["metrics"] = resolve_output(kv["metrics"]).string();
  if (kv.count("checkpoint")) kv["checkpoint"] = resolve_output(kv["checkpoint"]).string();
  try {
    cfg.apply(kv);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!cfg.metrics_path.empty()) std::ofstream(cfg.metrics_path, std::ios::trunc);
  const TrainResult r = train(cfg, make_dataset(cfg));
  const EpochMetrics& last = r.metrics.back();
  json config = json::object();
  for (const auto& [k, v] : cfg.to_map()) config[k] = v;
  out << json{{"config", config},
              {"parameters", r.model.parameter_count()},
              {"train_size", r.train_size},
              {"val_size", r.val_size},
              {"majority_baseline", r.majority_baseline},
              {"initial_train_loss", r.initial_train_loss},
              {"epochs", last.epoch},
              {"train_loss", last.train_loss},
              {"train_accuracy", last.train_accuracy},
              {"val_loss", last.val_loss},
              {"val_accuracy", last.val_accuracy}}
             .dump(2)
      << '\n';
  return kExitOk;
}

// ---- bench ----

struct BenchArgs {
  std::string mechanism = "strassen";
  std::string path = "naive";
  std::vector<std::size_t> ns{64, 128, 256};
  std::vector<std::size_t> ds{8};
  std::size_t reps = 5;
  std::uint64_t seed = 1;
  std::string out;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  const bool fast = path_arg(a.path) == StrassenPath::Fast;
  if (a.reps < 5) throw UsageError("bench: --reps must be at least 5");
  BenchOptions opt;
  opt.reps = a.reps;
  opt.seed = a.seed;
  std::vector<BenchRecord> records;
  if (a.mechanism == "matmul") {
    records = bench_matmul(a.ns, opt);
  } else {
    const Mechanism kind = mechanism_arg(a.mechanism);
    if (fast && kind != Mechanism::Strassen) throw UsageError("bench: the fast path exists for strassen only");
    records = bench_forward(kind, fast, a.ns, a.ds, opt);
  }
  if (a.out.empty()) {
    write_bench_csv(out, records);
  } else {
    std::ofstream f = open_output(a.out);
    write_bench_csv(f, records);
  }
  return kExitOk;
}

} // namespace

std::filesystem::path resolve_output(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0')
      return std::filesystem::path(dir) / p;
  }
  return p;
}

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention mechanisms, constructions, split-VC search, datasets, training and benchmarks"};
  app.name(args.empty() ? "sattn" : args.front());
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a JSONL dataset");
  g->add_option("task", gen.task, "funccomp, binrel, match3 or quotient")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--count", gen.count, "Instances (dataset size D for match3)")->required();
  g->add_option("--out", gen.out, "Output file; stdout when omitted");
  g->add_option("--nmin", gen.nmin, "Smallest n or m");
  g->add_option("--nmax", gen.nmax, "Largest n or m");
  g->add_option("--p", gen.p, "Edge probability for binrel and quotient");
  g->add_option("--modulus", gen.modulus, "Match3 modulus");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Check a hand-set construction against brute force");
  v->add_option("task", ver.task, "funccomp, binrel, match3 or quotient")->required();
  auto* vi = v->add_option("--instances", ver.instances, "JSONL dataset file");
  auto* vr = v->add_option("--random", ver.random, "Random instances spread over the default sizes");
  vi->excludes(vr);
  v->add_option("--seed", ver.seed, "Seed for --random");
  v->add_option("--path", ver.path, "Strassen evaluation path: naive or fast");
  v->add_option("--report", ver.report, "Also write the JSON report here");

  SplitVCArgs svc;
  auto* s = app.add_subcommand("splitvc", "Split-VC dimension of a truth table or a lemma certificate");
  auto* st = s->add_option("--table", svc.table, "Truth-table file");
  auto* sl = s->add_option("--lemma", svc.lemma, "ind, sum2 or disj");
  s->add_option("--param", svc.param, "Lemma size parameter");
  st->excludes(sl);

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--mechanism", gr.mechanism, "standard, triangular, third_order or strassen");
  gc->add_option("--n", gr.n, "Tokens (a square for triangular)");
  gc->add_option("--d", gr.d, "Embedding dimension");
  gc->add_option("--points", gr.points, "Random points");
  gc->add_option("--seed", gr.seed, "Random seed");
  gc->add_option("--eps", gr.eps, "Central-difference step");
  gc->add_option("--tol", gr.tol, "Largest accepted relative error");
  gc->add_flag("--layer", gr.layer, "Check the whole layer instead of one head");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a one-layer model on a synthetic task");
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--set", tr.set, "Override, key=value (repeatable)");
  t->add_option("--task", tr.task, "Task");
  t->add_option("--mechanism", tr.mechanism, "Mechanism");
  t->add_option("--preset", tr.preset, "paper or desk (default desk)");
  t->add_option("--metrics", tr.metrics, "Per-epoch CSV");
  t->add_option("--checkpoint", tr.checkpoint, "Checkpoint file");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Forward-pass wall-time benchmark");
  b->add_option("--mechanism", be.mechanism, "Mechanism, or matmul for the product kernels");
  b->add_option("--path", be.path, "naive or fast");
  b->add_option("--n-list", be.ns, "Token counts")->delimiter(',');
  b->add_option("--d-list", be.ds, "Embedding dimensions")->delimiter(',');
  b->add_option("--reps", be.reps, "Timed repetitions (>= 5)");
  b->add_option("--seed", be.seed, "Random seed");
  b->add_option("--out", be.out, "CSV file; stdout when omitted");

  try {
    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (g->parsed()) return run_gen(gen, out);
    if (v->parsed()) {
      if (ver.instances.empty() && ver.random == 0) throw UsageError("verify: give --instances FILE or --random N");
      return run_verify(ver, out);
    }
    if (s->parsed()) {
      if (svc.table.empty() && svc.lemma.empty()) throw UsageError("splitvc: give --table FILE or --lemma NAME");
      return run_splitvc(svc, out);
    }
    if (gc->parsed()) return run_gradcheck(gr, out);
    if (t->parsed()) return run_train(tr, out);
    if (b->parsed()) return run_bench(be, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    // Malformed input files and generator failures.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

int cli_run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cli_run(args, std::cout, std::cerr);
}

} // namespace sattn
