#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oki/embedding.hpp"
#include "oki/evaluation.hpp"
#include "oki/hardneg.hpp"

namespace oki {

// learning rate used when fine-tuning a full transformer instead of the adapter
inline constexpr double kFullModelLearningRate = 1e-8;

struct TrainerConfig {
  std::size_t batch_size = 24;
  double temperature = 0.05;
  double learning_rate = 1e-2;  // adapter-scale default; see full_model_parity()
  double weight_decay = 1e-4;
  double warmup_fraction = 0.1;
  std::size_t max_epochs = 2;
  std::size_t hard_negatives_per_sample = 1;  // K
  // global-norm gradient clip; 0 disables it
  double max_gradient_norm = 1.0;
  std::uint64_t seed = 0;
  // ablation: each anchor sees only its own K negatives (plus all positives)
  bool own_negatives_only = false;

  void validate() const;  // ConfigError on nonsense values
  static TrainerConfig full_model_parity();
};

struct BatchLossReport {
  std::vector<double> losses;  // per sample, all finite and >= 0
  double mean_loss = 0.0;
  // row i: cosine similarities of anchor i against its candidate list
  // (all in-batch positives first, then the negatives it sees)
  std::vector<std::vector<double>> similarities;
};

// Contrastive cross-entropy over similarity logits: for each anchor, its own
// positive must win against every other in-batch positive and the hard
// negatives. Stabilized by max-subtraction.
BatchLossReport infonce_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                             const std::vector<std::vector<Vec>>& hard_negatives,
                             double temperature, bool own_negatives_only = false);

// Base-encoder outputs for one batch; the adapter forward pass happens inside
// the loss/gradient computation.
struct ContrastiveBatch {
  std::vector<Vec> anchors;
  std::vector<Vec> positives;
  std::vector<std::vector<Vec>> hard_negatives;  // ragged, <= K each
};

struct AdapterGradient {
  std::vector<double> weights;  // layout matches AdapterEncoder::weights()
  std::vector<double> bias;
  double loss = 0.0;  // mean batch loss at the evaluated point
};

// Analytic gradient of the mean batch loss w.r.t. the adapter parameters.
// The base encoder is frozen; gradients never flow into it. Summation order
// is fixed, so results are bitwise reproducible.
AdapterGradient loss_gradient(const ContrastiveBatch& batch, const AdapterEncoder& adapter,
                              double temperature, bool own_negatives_only = false);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, 0-based
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> selection_score;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;
  std::size_t best_epoch = 0;  // 1-based; 0 when selection never ran
};

std::string dump_train_log(const TrainLog& log);  // line-delimited JSON

struct TrainResult {
  AdapterEncoder adapter;
  TrainLog log;
};

// Mini-batch gradient descent with decoupled weight decay and a linear
// warmup into a constant learning rate. After every epoch the adapter is
// scored by Spearman correlation on selection_set; the best-scoring epoch's
// weights are returned (ties keep the earlier epoch). Seeded shuffling makes
// reruns identical.
TrainResult train(const std::vector<TrainingSample>& samples, AdapterEncoder adapter,
                  const TrainerConfig& config,
                  const std::vector<StsPair>* selection_set = nullptr);

}  // namespace oki
