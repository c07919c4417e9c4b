#include "sattn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sattn/diff_layers.hpp"
#include "sattn/errors.hpp"
#include "sattn/rng.hpp"

namespace sattn {

// ---------------------------------------------------------------------------
// Configuration.

TrainConfig TrainConfig::paper(Task task, Mechanism mechanism) {
  TrainConfig c;
  c.task = task;
  c.mechanism = mechanism;
  c.lr = 1e-3;
  c.count = 50000;
  switch (task) {
  case Task::FuncComp:
    c.d = 16, c.heads = 1, c.batch = 2500, c.epochs = 1000, c.dropout = 0.3, c.nmin = 25, c.nmax = 30;
    break;
  case Task::BinRel:
    c.d = 16, c.heads = 1, c.batch = 2500, c.epochs = 200, c.dropout = 0.3, c.nmin = 6, c.nmax = 8, c.p = 0.325;
    break;
  case Task::Match3:
    c.d = 128, c.heads = 2, c.batch = 2500, c.epochs = 500, c.dropout = 0.4, c.nmin = 30, c.nmax = 35;
    c.modulus = 37;
    break;
  case Task::Quotient:
  case Task::DisjReduction:
    c.task = Task::Quotient;
    c.d = 16, c.heads = 1, c.batch = 2000, c.epochs = 3000, c.dropout = 0.3, c.nmin = 6, c.nmax = 8, c.p = 0.433;
    break;
  }
  return c;
}

TrainConfig TrainConfig::desk(Task task, Mechanism mechanism) {
  TrainConfig c = paper(task, mechanism);
  c.count = 2000;
  c.batch = 100;
  c.lr = 3e-3;
  switch (c.task) {
  case Task::FuncComp: c.nmin = 5, c.nmax = 8, c.epochs = 300; break;
  case Task::BinRel: c.nmin = 3, c.nmax = 4, c.epochs = 100; break;
  case Task::Match3: c.nmin = 6, c.nmax = 8, c.epochs = 100, c.d = 32; break;
  default: c.nmin = 3, c.nmax = 4, c.epochs = 300; break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (d == 0 || heads == 0 || batch == 0) throw std::invalid_argument("TrainConfig: d, heads and batch must be positive");
  if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("TrainConfig: dropout must lie in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("TrainConfig: val_fraction must lie in [0, 1)");
  if (nmin < 1 || nmin > nmax) throw std::invalid_argument("TrainConfig: need 1 <= nmin <= nmax");
  if (task == Task::DisjReduction) throw std::invalid_argument("TrainConfig: disj_reduction is not a training task");
  if (mechanism == Mechanism::Triangular && (task == Task::FuncComp || task == Task::Match3)) {
    throw std::invalid_argument("TrainConfig: triangular attention needs a grid task");
  }
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof()) throw std::invalid_argument("config: bad value for " + key + ": " + value);
  return out;
}

} // namespace

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "task") {
      const auto t = parse_task(value);
      if (!t) throw std::invalid_argument("config: unknown task " + value);
      task = *t;
    } else if (key == "mechanism") {
      const auto m = parse_mechanism(value);
      if (!m) throw std::invalid_argument("config: unknown mechanism " + value);
      mechanism = *m;
    } else if (key == "d") d = parse_number<std::size_t>(key, value);
    else if (key == "heads") heads = parse_number<std::size_t>(key, value);
    else if (key == "batch") batch = parse_number<std::size_t>(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "dropout") dropout = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
    else if (key == "beta1") beta1 = parse_number<double>(key, value);
    else if (key == "beta2") beta2 = parse_number<double>(key, value);
    else if (key == "adam_eps") adam_eps = parse_number<double>(key, value);
    else if (key == "mlp_hidden") mlp_hidden = parse_number<std::size_t>(key, value);
    else if (key == "init_bound") init_bound = parse_number<double>(key, value);
    else if (key == "val_fraction") val_fraction = parse_number<double>(key, value);
    else if (key == "count") count = parse_number<std::size_t>(key, value);
    else if (key == "nmin") nmin = parse_number<std::size_t>(key, value);
    else if (key == "nmax") nmax = parse_number<std::size_t>(key, value);
    else if (key == "p") p = parse_number<double>(key, value);
    else if (key == "modulus") modulus = parse_number<std::int64_t>(key, value);
    else if (key == "data_seed") data_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "metrics") metrics_path = value;
    else if (key == "checkpoint") checkpoint_path = value;
    else throw std::invalid_argument("config: unknown key " + key);
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto num = [](auto v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  return {{"task", task_name(task)},
          {"mechanism", mechanism_name(mechanism)},
          {"d", num(d)},
          {"heads", num(heads)},
          {"batch", num(batch)},
          {"lr", num(lr)},
          {"epochs", num(epochs)},
          {"dropout", num(dropout)},
          {"seed", num(seed)},
          {"weight_decay", num(weight_decay)},
          {"beta1", num(beta1)},
          {"beta2", num(beta2)},
          {"adam_eps", num(adam_eps)},
          {"mlp_hidden", num(mlp_hidden)},
          {"init_bound", num(init_bound)},
          {"val_fraction", num(val_fraction)},
          {"count", num(count)},
          {"nmin", num(nmin)},
          {"nmax", num(nmax)},
          {"p", num(p)},
          {"modulus", num(modulus)},
          {"data_seed", num(data_seed)},
          {"metrics", metrics_path},
          {"checkpoint", checkpoint_path}};
}

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: line " + std::to_string(lineno) + " lacks '='");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features.

namespace {

bool grid_task(Task t) { return t == Task::BinRel || t == Task::Quotient || t == Task::DisjReduction; }

} // namespace

Featurizer Featurizer::make(const TrainConfig& cfg) {
  Featurizer f;
  f.task = cfg.task;
  const std::size_t nmax = cfg.nmax;
  switch (cfg.task) {
  case Task::FuncComp:
    // symbol: values 0..nmax-1, bottom = nmax, pad = nmax+1; position 0..nmax, pad.
    f.vocab = {nmax + 2, nmax + 2};
    f.max_len = nmax + 1;
    break;
  case Task::Match3:
    f.vocab = {static_cast<std::size_t>(cfg.modulus) + 1, nmax + 1};
    f.max_len = nmax;
    break;
  case Task::BinRel:
    f.vocab = {3, nmax + 1, nmax + 1};
    f.max_len = nmax;
    break;
  case Task::Quotient:
  case Task::DisjReduction:
    f.vocab = {3, nmax + 1, nmax + 1, nmax + 1, nmax + 1};
    f.max_len = nmax;
    break;
  }
  return f;
}

std::size_t Featurizer::padded_tokens(std::size_t len) const { return grid_task(task) ? len * len : len; }

std::size_t Featurizer::length(const TaskInstance& inst) const {
  if (grid_task(task)) {
    if (!inst.meta.m) throw std::invalid_argument("Featurizer: grid instance without m");
    return *inst.meta.m;
  }
  return inst.x.size();
}

Featurizer::Encoded Featurizer::encode(const TaskInstance& inst, std::size_t len) const {
  const bool same_family = inst.task == task || (grid_task(inst.task) && grid_task(task) &&
                                                 (inst.task == Task::BinRel) == (task == Task::BinRel));
  if (!same_family) throw std::invalid_argument("Featurizer: instance task differs from the model task");
  const std::size_t own = length(inst);
  if (own > len || own > max_len) throw ShapeError("Featurizer: instance longer than the padded length");
  Encoded e;
  const std::size_t tokens = padded_tokens(len);
  e.ids.assign(vocab.size(), std::vector<std::size_t>(tokens, 0));
  e.targets.assign(tokens, kMaskedLabel);
  e.pad.assign(tokens, 1);
  auto symbol = [&](std::size_t g, std::int64_t v) {
    if (v < 0 || static_cast<std::size_t>(v) + 1 >= vocab[g]) throw std::out_of_range("Featurizer: symbol outside the vocabulary");
    return static_cast<std::size_t>(v);
  };
  switch (task) {
  case Task::FuncComp: {
    const std::size_t bottom = vocab[0] - 2;
    for (std::size_t t = 0; t < tokens; ++t) {
      if (t < own) {
        e.ids[0][t] = t == 0 ? bottom : symbol(0, inst.x[t]);
        e.ids[1][t] = t;
        e.pad[t] = 0;
      } else {
        e.ids[0][t] = vocab[0] - 1;
        e.ids[1][t] = vocab[1] - 1;
      }
    }
    e.targets[0] = inst.y.at(0);
    break;
  }
  case Task::Match3: {
    for (std::size_t t = 0; t < tokens; ++t) {
      if (t < own) {
        e.ids[0][t] = symbol(0, inst.x[t]);
        e.ids[1][t] = t;
        e.pad[t] = 0;
        e.targets[t] = inst.y.at(t);
      } else {
        e.ids[0][t] = vocab[0] - 1;
        e.ids[1][t] = vocab[1] - 1;
      }
    }
    break;
  }
  case Task::BinRel:
  case Task::Quotient:
  case Task::DisjReduction: {
    const std::size_t m = own;
    const bool colours = vocab.size() == 5;
    if (colours && inst.meta.col.size() != m) throw ShapeError("Featurizer: colouring must have m entries");
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t t = i * len + j;
        if (i < m && j < m) {
          e.ids[0][t] = symbol(0, inst.x[i * m + j]);
          e.ids[1][t] = i;
          e.ids[2][t] = j;
          if (colours) {
            e.ids[3][t] = symbol(3, inst.meta.col[i]);
            e.ids[4][t] = symbol(4, inst.meta.col[j]);
          }
          e.pad[t] = 0;
          e.targets[t] = inst.y.at(i * m + j);
        } else {
          for (std::size_t g = 0; g < vocab.size(); ++g) e.ids[g][t] = vocab[g] - 1;
        }
      }
    break;
  }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Model.

namespace {

std::size_t weights_per_head(Mechanism m) {
  switch (m) {
  case Mechanism::Standard: return 3;
  case Mechanism::Triangular: return 4;
  case Mechanism::ThirdOrder:
  case Mechanism::Strassen: return 5;
  }
  return 0;
}

Matrix uniform_matrix(std::size_t r, std::size_t c, double bound, RngStream& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

} // namespace

Model Model::init(const TrainConfig& cfg, RngStream& rng) {
  cfg.validate();
  Model model;
  model.config = cfg;
  model.features = Featurizer::make(cfg);
  const std::size_t d = cfg.d;
  const double bound = cfg.init_bound > 0.0 ? cfg.init_bound : 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t v : model.features.vocab) model.params.push_back(uniform_matrix(v, d, bound, rng));
  for (std::size_t h = 0; h < cfg.heads; ++h)
    for (std::size_t w = 0; w < weights_per_head(cfg.mechanism); ++w) model.params.push_back(uniform_matrix(d, d, bound, rng));
  model.params.push_back(uniform_matrix(d, d * cfg.heads, bound, rng));
  model.params.push_back(uniform_matrix(cfg.hidden(), d, bound, rng));
  model.params.push_back(Matrix(1, cfg.hidden()));
  model.params.push_back(uniform_matrix(1, cfg.hidden(), bound, rng));
  model.params.push_back(Matrix(1, 1));
  return model;
}

std::size_t Model::head_weight_count() const { return weights_per_head(config.mechanism); }
std::size_t Model::wo_index() const { return embedding_count() + config.heads * head_weight_count(); }
std::size_t Model::mlp_index() const { return wo_index() + 1; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix& p : params) n += p.size();
  return n;
}

TransformerSpec Model::layer_spec() const {
  TransformerSpec spec;
  spec.d = config.d;
  for (std::size_t h = 0; h < config.heads; ++h) {
    AttentionParams ap;
    ap.kind = config.mechanism;
    const std::size_t base = embedding_count() + h * head_weight_count();
    for (std::size_t w = 0; w < head_weight_count(); ++w) ap.weights.push_back(params[base + w]);
    spec.heads.push_back(std::move(ap));
  }
  spec.wo = params[wo_index()];
  const std::size_t m = mlp_index();
  spec.mlp.layers.push_back({params[m], params[m + 1].row_copy(0)});
  spec.mlp.layers.push_back({params[m + 2], params[m + 3].row_copy(0)});
  return spec;
}

Matrix Model::embed(const Featurizer::Encoded& enc) const {
  const std::size_t tokens = enc.pad.size();
  Matrix x(tokens, config.d);
  for (std::size_t g = 0; g < enc.ids.size(); ++g)
    for (std::size_t t = 0; t < tokens; ++t) {
      const Matrix& table = params[g];
      for (std::size_t c = 0; c < config.d; ++c) x(t, c) += table(enc.ids[g][t], c);
    }
  return x;
}

Vector Model::logits(const TaskInstance& inst, std::size_t len) const {
  const Featurizer::Encoded enc = features.encode(inst, len);
  return forward(embed(enc), layer_spec(), enc.pad);
}

// ---------------------------------------------------------------------------
// Loss and accuracy.

namespace {

double softplus_value(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace

double bce_masked_loss(std::span<const double> logits, std::span<const std::int64_t> targets) {
  if (logits.size() != targets.size()) throw ShapeError("bce_masked_loss: length mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (targets[t] != 0 && targets[t] != 1) continue;
    total += softplus_value(logits[t]) - static_cast<double>(targets[t]) * logits[t];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("bce_masked_loss: every position is masked");
  return total / static_cast<double>(count);
}

double per_batch_mean_accuracy(std::span<const BatchCounts> batches) {
  double total = 0.0;
  std::size_t used = 0;
  for (const BatchCounts& b : batches) {
    if (b.labelled == 0) continue;
    total += static_cast<double>(b.correct) / static_cast<double>(b.labelled);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("per_batch_mean_accuracy: no labelled batch");
  return total / static_cast<double>(used);
}

namespace {

std::size_t batch_length(const Featurizer& f, std::span<const TaskInstance> batch) {
  std::size_t len = 0;
  for (const TaskInstance& inst : batch) len = std::max(len, f.length(inst));
  return len;
}

} // namespace

EvalResult evaluate(const Model& model, std::span<const TaskInstance> data, std::size_t batch) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch == 0) throw std::invalid_argument("evaluate: batch size must be positive");
  const TransformerSpec spec = model.layer_spec();
  std::vector<BatchCounts> counts;
  double loss = 0.0;
  std::size_t loss_batches = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const auto chunk = data.subspan(start, std::min(batch, data.size() - start));
    const std::size_t len = batch_length(model.features, chunk);
    BatchCounts bc;
    std::vector<double> all_logits;
    std::vector<std::int64_t> all_targets;
    for (const TaskInstance& inst : chunk) {
      const Featurizer::Encoded enc = model.features.encode(inst, len);
      const Vector z = forward(model.embed(enc), spec, enc.pad);
      for (std::size_t t = 0; t < z.size(); ++t) {
        const std::int64_t y = enc.targets[t];
        if (y != 0 && y != 1) continue;
        ++bc.labelled;
        if (readout_sign(z[t]) == y) ++bc.correct;
        all_logits.push_back(z[t]);
        all_targets.push_back(y);
      }
    }
    counts.push_back(bc);
    if (bc.labelled > 0) {
      loss += bce_masked_loss(all_logits, all_targets);
      ++loss_batches;
    }
  }
  EvalResult r;
  r.accuracy = per_batch_mean_accuracy(counts);
  r.loss = loss / static_cast<double>(loss_batches);
  return r;
}

// ---------------------------------------------------------------------------
// Optimizer.

AdamW::AdamW(double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

void AdamW::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw ShapeError("AdamW: gradient count differs from parameter count");
  if (m_.empty()) {
    for (const Matrix& p : params) {
      m_.emplace_back(p.rows(), p.cols());
      v_.emplace_back(p.rows(), p.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw ShapeError("AdamW: gradient shape differs");
    double* pd = p.data().data();
    const double* gd = g.data().data();
    double* md = m_[i].data().data();
    double* vd = v_[i].data().data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      md[k] = beta1_ * md[k] + (1.0 - beta1_) * gd[k];
      vd[k] = beta2_ * vd[k] + (1.0 - beta2_) * gd[k] * gd[k];
      const double update = (md[k] / c1) / (std::sqrt(vd[k] / c2) + eps_) + wd_ * pd[k];
      pd[k] -= lr_ * update;
    }
  }
}

// ---------------------------------------------------------------------------
// Training.

std::vector<TaskInstance> make_dataset(const TrainConfig& c) {
  RngStream rng(c.data_seed);
  switch (c.task) {
  case Task::FuncComp: return gen_funccomp(rng, c.count, {c.nmin, c.nmax});
  case Task::BinRel: return gen_binrel(rng, c.count, {c.nmin, c.nmax, c.p});
  case Task::Match3: {
    Match3Gen g;
    g.nmin = c.nmin;
    g.nmax = c.nmax;
    g.modulus = c.modulus;
    return gen_match3(rng, c.count - c.count % 4, g);
  }
  case Task::Quotient: return gen_quotient(rng, c.count, {c.nmin, c.nmax, c.p});
  case Task::DisjReduction: break;
  }
  throw std::invalid_argument("make_dataset: task has no generator");
}

namespace {

struct BatchStep {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

BatchStep batch_gradient(const Model& model, std::span<const TaskInstance> batch, RngStream& rng) {
  const TrainConfig& cfg = model.config;
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(model.params.size());
  for (const Matrix& p : model.params) vars.push_back(tape.variable(p));

  ad::LayerVars layer;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    ad::HeadVars hv;
    hv.kind = cfg.mechanism;
    hv.scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    const std::size_t base = model.embedding_count() + h * model.head_weight_count();
    for (std::size_t w = 0; w < model.head_weight_count(); ++w) hv.weights.push_back(vars[base + w]);
    layer.heads.push_back(std::move(hv));
  }
  layer.wo = vars[model.wo_index()];
  const std::size_t m = model.mlp_index();
  layer.mlp_weights = {vars[m], vars[m + 2]};
  layer.mlp_biases = {vars[m + 1], vars[m + 3]};

  const std::size_t len = batch_length(model.features, batch);
  const double keep = 1.0 - cfg.dropout;
  std::vector<ad::Var> losses;
  std::size_t labelled = 0;
  for (const TaskInstance& inst : batch) {
    const Featurizer::Encoded enc = model.features.encode(inst, len);
    const std::size_t tokens = enc.pad.size();
    ad::Var x = ad::select_rows(vars[0], enc.ids[0]);
    for (std::size_t g = 1; g < enc.ids.size(); ++g) x = ad::add(x, ad::select_rows(vars[g], enc.ids[g]));

    std::vector<Matrix> masks;
    if (cfg.dropout > 0.0) {
      Matrix mask(tokens, cfg.hidden());
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t c = 0; c < cfg.hidden(); ++c) mask(t, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      masks.push_back(std::move(mask));
    }
    const ad::Var z = ad::layer(x, layer, enc.pad, masks);

    std::vector<std::size_t> rows;
    std::vector<double> targets;
    for (std::size_t t = 0; t < tokens; ++t)
      if (enc.targets[t] == 0 || enc.targets[t] == 1) {
        rows.push_back(t);
        targets.push_back(static_cast<double>(enc.targets[t]));
      }
    if (rows.empty()) continue;
    labelled += rows.size();
    const ad::Var zs = ad::select_rows(z, rows);
    const ad::Var y = tape.constant(Matrix::column(targets));
    losses.push_back(ad::sum(ad::sub(ad::softplus(zs), ad::hadamard(y, zs))));
  }
  if (labelled == 0) throw std::invalid_argument("train: batch without labels");
  ad::Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
  const ad::Var mean = ad::scale(total, 1.0 / static_cast<double>(labelled));
  BatchStep out;
  out.loss = tape.scalar(mean);
  out.grads = tape.gradients(mean, vars);
  return out;
}

} // namespace

TrainResult train(const TrainConfig& config, const std::vector<TaskInstance>& dataset) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  RngStream rng(config.seed);
  RngStream init_rng = rng.split();
  RngStream split_rng = rng.split();
  RngStream order_rng = rng.split();
  RngStream dropout_rng = rng.split();

  TrainResult result{Model::init(config, init_rng), {}, 0.0, 0.0, 0, 0};
  Model& model = result.model;

  std::vector<std::size_t> perm = split_rng.permutation(dataset.size());
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(dataset.size())));
  if (n_val >= dataset.size()) n_val = dataset.size() - 1;
  std::vector<TaskInstance> train_set, val_set;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? val_set : train_set).push_back(dataset[perm[i]]);
  result.train_size = train_set.size();
  result.val_size = val_set.size();

  std::size_t ones = 0, labels = 0;
  for (const TaskInstance& inst : train_set)
    for (std::int64_t y : inst.y)
      if (y == 0 || y == 1) {
        ++labels;
        ones += static_cast<std::size_t>(y);
      }
  if (labels == 0) throw std::invalid_argument("train: training split has no labels");
  result.majority_baseline = static_cast<double>(std::max(ones, labels - ones)) / static_cast<double>(labels);
  result.initial_train_loss = evaluate(model, train_set, config.batch).loss;

  AdamW opt(config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      std::vector<TaskInstance> chunk;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch); ++i) chunk.push_back(train_set[order[i]]);
      BatchStep step = batch_gradient(model, chunk, dropout_rng);
      opt.step(model.params, step.grads);
      loss_sum += step.loss;
      ++batches;
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(batches);
    const EvalResult t = evaluate(model, train_set, config.batch);
    em.train_accuracy = t.accuracy;
    em.train_eval_loss = t.loss;
    if (!val_set.empty()) {
      const EvalResult v = evaluate(model, val_set, config.batch);
      em.val_accuracy = v.accuracy;
      em.val_loss = v.loss;
    }
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(em);
  }

  if (!config.metrics_path.empty()) {
    std::ifstream probe(config.metrics_path);
    const bool fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
    probe.close();
    std::ofstream out(config.metrics_path, std::ios::app);
    if (!out) throw std::runtime_error("train: cannot open " + config.metrics_path);
    write_metrics_csv(out, result.metrics, fresh);
  }
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model);
  return result;
}

// ---------------------------------------------------------------------------
// Output.

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics, bool header) {
  if (header) out << "epoch,split,loss,accuracy,seconds\n";
  const auto old = out.precision(10);
  for (const EpochMetrics& m : metrics) {
    out << m.epoch << ",train," << m.train_loss << ',' << m.train_accuracy << ',' << m.seconds << '\n';
    out << m.epoch << ",val," << m.val_loss << ',' << m.val_accuracy << ',' << m.seconds << '\n';
  }
  out.precision(old);
}

void save_checkpoint(const std::string& path, const Model& model) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  nlohmann::ordered_json header;
  header["format"] = "sattn-checkpoint-1";
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : model.config.to_map()) cfg[k] = v;
  header["config"] = cfg;
  nlohmann::json shapes = nlohmann::json::array();
  for (const Matrix& p : model.params) shapes.push_back({p.rows(), p.cols()});
  header["shapes"] = shapes;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  for (const Matrix& p : model.params)
    out.write(reinterpret_cast<const char*>(p.data().data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.at("format") != "sattn-checkpoint-1") throw std::invalid_argument("load_checkpoint: unknown format");
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : header.at("config").items()) kv[k] = v.get<std::string>();
  TrainConfig cfg;
  cfg.apply(kv);
  RngStream rng(0);
  Model model = Model::init(cfg, rng);
  const auto& shapes = header.at("shapes");
  if (shapes.size() != model.params.size()) throw ShapeError("load_checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    Matrix& p = model.params[i];
    if (shapes[i][0].get<std::size_t>() != p.rows() || shapes[i][1].get<std::size_t>() != p.cols()) {
      throw ShapeError("load_checkpoint: shape mismatch at parameter " + std::to_string(i));
    }
    in.read(reinterpret_cast<char*>(p.data().data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return model;
}

} // namespace sattn
