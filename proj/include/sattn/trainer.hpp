#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sattn/attention.hpp"
#include "sattn/tasks.hpp"
#include "sattn/transformer.hpp"

namespace sattn {

class RngStream;

struct TrainConfig {
  Task task = Task::FuncComp;
  Mechanism mechanism = Mechanism::Strassen;
  std::size_t d = 16;
  std::size_t heads = 1;
  std::size_t batch = 250;
  double lr = 1e-3;
  std::size_t epochs = 100;
  double dropout = 0.3;
  std::uint64_t seed = 1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Hidden width of the output MLP; 0 means 4d.
  std::size_t mlp_hidden = 0;
  /// Uniform init bound; 0 means 1/sqrt(d).
  double init_bound = 0.0;
  double val_fraction = 0.1;

  // Dataset.
  std::size_t count = 2000;
  std::size_t nmin = 5;
  std::size_t nmax = 8;
  double p = 0.325;
  std::int64_t modulus = 37;
  std::uint64_t data_seed = 1;

  std::string metrics_path;
  std::string checkpoint_path;

  /// Row of the hyperparameter table for (task, mechanism), with the paper's
  /// length ranges and dataset size.
  static TrainConfig paper(Task task, Mechanism mechanism);
  /// Same model and optimizer, lengths and sizes cut for a desk run.
  static TrainConfig desk(Task task, Mechanism mechanism);

  std::size_t hidden() const { return mlp_hidden ? mlp_hidden : 4 * d; }
  void validate() const;
  /// Applies key=value pairs; unknown keys throw std::invalid_argument.
  void apply(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;
};

/// Flat "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Per-token feature ids. Every token has one id per feature group; its
/// embedding is the sum of the matching rows of each group's table.
struct Featurizer {
  Task task = Task::FuncComp;
  std::vector<std::size_t> vocab; // rows per group, pad id included
  std::size_t max_len = 0;

  static Featurizer make(const TrainConfig& cfg);
  /// Token count after padding an instance to `len` tokens (grid side for
  /// grid tasks).
  std::size_t padded_tokens(std::size_t len) const;
  /// Length unit of an instance: tokens, or grid side for grid tasks.
  std::size_t length(const TaskInstance& inst) const;
  /// ids[g][t], targets and pad flags for the instance padded to `len`.
  struct Encoded {
    std::vector<std::vector<std::size_t>> ids;
    std::vector<std::int64_t> targets;
    std::vector<std::uint8_t> pad;
  };
  Encoded encode(const TaskInstance& inst, std::size_t len) const;
};

/// Embedding tables, then one head's weights per head in AttentionParams
/// order, W_O, and the MLP (W1, b1, W2, b2) with biases stored as 1 x out.
struct Model {
  TrainConfig config;
  Featurizer features;
  std::vector<Matrix> params;

  static Model init(const TrainConfig& cfg, RngStream& rng);
  std::size_t embedding_count() const { return features.vocab.size(); }
  std::size_t head_weight_count() const;
  std::size_t wo_index() const;
  std::size_t mlp_index() const;
  /// Kernel-side view of the layer, for evaluation.
  TransformerSpec layer_spec() const;
  Matrix embed(const Featurizer::Encoded& enc) const;
  /// One logit per token.
  Vector logits(const TaskInstance& inst, std::size_t len) const;
  std::size_t parameter_count() const;
};

/// Mean binary cross-entropy over positions whose target is 0 or 1; -100
/// positions are skipped. Throws std::invalid_argument when none remain.
double bce_masked_loss(std::span<const double> logits, std::span<const std::int64_t> targets);

struct BatchCounts {
  std::size_t correct = 0;
  std::size_t labelled = 0;
};

/// Unweighted mean of per-batch accuracies; batches without labels are
/// skipped.
double per_batch_mean_accuracy(std::span<const BatchCounts> batches);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Consecutive batches of `batch` instances, each padded to its longest.
EvalResult evaluate(const Model& model, std::span<const TaskInstance> data, std::size_t batch);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// Loss on the training split after the epoch, without dropout.
  double train_eval_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
  double initial_train_loss = 0.0;
  /// Share of the more frequent label among training targets.
  double majority_baseline = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

/// Seeded 90/10 split, then AdamW on the batch-mean masked BCE. Appends to
/// config.metrics_path and writes config.checkpoint_path when set.
TrainResult train(const TrainConfig& config, const std::vector<TaskInstance>& dataset);

/// Dataset described by the config's task, size and length fields.
std::vector<TaskInstance> make_dataset(const TrainConfig& config);

/// AdamW with decoupled weight decay.
class AdamW {
public:
  AdamW(double lr, double beta1, double beta2, double eps, double weight_decay);
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);
  std::size_t steps() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics, bool header);

/// JSON header line (config and shapes), then raw little-endian doubles.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

} // namespace sattn
