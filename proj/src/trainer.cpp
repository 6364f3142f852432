#include "oki/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace oki {

using nlohmann::json;

void TrainerConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (hard_negatives_per_sample == 0 && batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 when no hard negatives are used");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw ConfigError("warmup_fraction must be in [0, 1]");
  }
  if (max_gradient_norm < 0.0) throw ConfigError("max_gradient_norm must be non-negative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
}

TrainerConfig TrainerConfig::full_model_parity() {
  TrainerConfig c;
  c.learning_rate = kFullModelLearningRate;
  return c;
}

// -- loss ---------------------------------------------------------------------

namespace {

struct Forward {
  Vec unit;        // h / |h|
  double norm_h;   // |h|
  double norm_y;   // |Wx + b| (pre-normalization norm)
};

Forward forward_one(const AdapterEncoder& adapter, const Vec& base_vec) {
  Vec y = adapter.affine(base_vec);
  double ny = l2_norm(y);
  if (ny == 0.0) throw DomainError("adapter output has zero norm");
  Forward f;
  f.norm_y = ny;
  if (adapter.normalize_output()) {
    for (double& v : y) v /= ny;
  }
  double nh = l2_norm(y);
  if (nh == 0.0) throw DomainError("adapter output has zero norm");
  f.norm_h = nh;
  for (double& v : y) v /= nh;
  f.unit = std::move(y);
  return f;
}

void check_same_dimension(const std::vector<Vec>& vectors, std::size_t dim, const char* what) {
  for (const Vec& v : vectors) {
    if (v.size() != dim) {
      throw ShapeError(std::string(what) + " dimension mismatch: " + std::to_string(v.size()) +
                       " vs " + std::to_string(dim));
    }
  }
}

}  // namespace

BatchLossReport infonce_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                             const std::vector<std::vector<Vec>>& hard_negatives,
                             double temperature, bool own_negatives_only) {
  const std::size_t n = anchors.size();
  if (n == 0) throw DomainError("empty batch");
  if (positives.size() != n) throw ShapeError("anchor/positive count mismatch");
  if (!hard_negatives.empty() && hard_negatives.size() != n) {
    throw ShapeError("hard negative rows must match the batch size");
  }
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  const std::size_t dim = anchors[0].size();
  check_same_dimension(anchors, dim, "anchor");
  check_same_dimension(positives, dim, "positive");
  for (const auto& row : hard_negatives) check_same_dimension(row, dim, "hard negative");

  BatchLossReport report;
  report.losses.resize(n);
  report.similarities.resize(n);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sims;
    sims.reserve(n + 8);
    for (std::size_t j = 0; j < n; ++j) {
      sims.push_back(cosine_similarity(anchors[i], positives[j]));
    }
    if (!hard_negatives.empty()) {
      if (own_negatives_only) {
        for (const Vec& w : hard_negatives[i]) {
          sims.push_back(cosine_similarity(anchors[i], w));
        }
      } else {
        for (const auto& row : hard_negatives) {
          for (const Vec& w : row) sims.push_back(cosine_similarity(anchors[i], w));
        }
      }
    }

    double max_logit = -std::numeric_limits<double>::infinity();
    for (double s : sims) {
      if (!std::isfinite(s)) throw NumericError("non-finite similarity in batch");
      max_logit = std::max(max_logit, s / temperature);
    }
    double denom = 0.0;
    for (double s : sims) denom += std::exp(s / temperature - max_logit);
    double loss = std::log(denom) + (max_logit - sims[i] / temperature);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    report.losses[i] = loss;
    report.similarities[i] = std::move(sims);
    total += loss;
  }
  report.mean_loss = total / static_cast<double>(n);
  return report;
}

AdapterGradient loss_gradient(const ContrastiveBatch& batch, const AdapterEncoder& adapter,
                              double temperature, bool own_negatives_only) {
  const std::size_t n = batch.anchors.size();
  if (n == 0) throw DomainError("empty batch");
  if (batch.positives.size() != n) throw ShapeError("anchor/positive count mismatch");
  if (!batch.hard_negatives.empty() && batch.hard_negatives.size() != n) {
    throw ShapeError("hard negative rows must match the batch size");
  }
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");

  // slot layout: anchors, positives, then negatives sample-major
  std::vector<const Vec*> base;
  base.reserve(2 * n + 8);
  for (const Vec& v : batch.anchors) base.push_back(&v);
  for (const Vec& v : batch.positives) base.push_back(&v);
  std::vector<std::vector<std::size_t>> negative_slots(n);
  for (std::size_t i = 0; i < batch.hard_negatives.size(); ++i) {
    for (const Vec& v : batch.hard_negatives[i]) {
      negative_slots[i].push_back(base.size());
      base.push_back(&v);
    }
  }
  const std::size_t slots = base.size();
  const std::size_t n_in = adapter.input_dimension();
  const std::size_t n_out = adapter.dimension();
  for (const Vec* v : base) {
    if (v->size() != n_in) throw ShapeError("base vector dimension mismatch");
  }

  std::vector<Forward> fwd;
  fwd.reserve(slots);
  for (const Vec* v : base) fwd.push_back(forward_one(adapter, *v));

  std::vector<Vec> dh(slots, Vec(n_out, 0.0));
  const double inv_n = 1.0 / static_cast<double>(n);
  double total_loss = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    // candidate slots for anchor i; its own positive sits at index i
    std::vector<std::size_t> cand;
    cand.reserve(n + 8);
    for (std::size_t j = 0; j < n; ++j) cand.push_back(n + j);
    if (own_negatives_only) {
      for (std::size_t s : negative_slots[i]) cand.push_back(s);
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t s : negative_slots[j]) cand.push_back(s);
      }
    }

    const Forward& fa = fwd[i];
    std::vector<double> sims(cand.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cand.size(); ++j) {
      double s = dot(fa.unit, fwd[cand[j]].unit);
      s = std::clamp(s, -1.0, 1.0);
      sims[j] = s;
      max_logit = std::max(max_logit, s / temperature);
    }
    double denom = 0.0;
    std::vector<double> expz(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j) {
      expz[j] = std::exp(sims[j] / temperature - max_logit);
      denom += expz[j];
    }
    double loss = std::log(denom) + (max_logit - sims[i] / temperature);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    total_loss += loss;

    for (std::size_t j = 0; j < cand.size(); ++j) {
      double p = expz[j] / denom;
      double g = (p - (j == i ? 1.0 : 0.0)) / temperature * inv_n;
      if (g == 0.0) continue;
      const Forward& fc = fwd[cand[j]];
      // d cos(a, c) = (c_hat - cos * a_hat) / |a|  w.r.t. a, symmetric in c
      Vec& da = dh[i];
      Vec& dc = dh[cand[j]];
      for (std::size_t d = 0; d < n_out; ++d) {
        da[d] += g * (fc.unit[d] - sims[j] * fa.unit[d]) / fa.norm_h;
        dc[d] += g * (fa.unit[d] - sims[j] * fc.unit[d]) / fc.norm_h;
      }
    }
  }

  AdapterGradient grad;
  grad.loss = total_loss * inv_n;
  grad.weights.assign(n_out * n_in, 0.0);
  grad.bias.assign(n_out, 0.0);

  for (std::size_t t = 0; t < slots; ++t) {
    const Forward& f = fwd[t];
    Vec dy(n_out, 0.0);
    if (adapter.normalize_output()) {
      // h = y / |y|: project out the radial component, scale by 1/|y|
      double radial = 0.0;
      for (std::size_t d = 0; d < n_out; ++d) radial += f.unit[d] * dh[t][d];
      for (std::size_t d = 0; d < n_out; ++d) {
        dy[d] = (dh[t][d] - radial * f.unit[d]) / f.norm_y;
      }
    } else {
      // h == y up to the unit/norm bookkeeping: dh is w.r.t. h, and
      // cos used h via unit/norm, so dh already holds d/dy
      dy = dh[t];
    }
    const Vec& x = *base[t];
    for (std::size_t r = 0; r < n_out; ++r) {
      if (dy[r] == 0.0) continue;
      double* wrow = &grad.weights[r * n_in];
      for (std::size_t c = 0; c < n_in; ++c) wrow[c] += dy[r] * x[c];
      grad.bias[r] += dy[r];
    }
  }
  return grad;
}

// -- training loop ---------------------------------------------------------------

namespace {

double selection_spearman(const AdapterEncoder& adapter, VectorCache& base_cache,
                          const std::vector<StsPair>& selection) {
  std::vector<double> pred(selection.size());
  std::vector<double> gold(selection.size());
  const Encoder& base = adapter.base();
  for (std::size_t i = 0; i < selection.size(); ++i) {
    Vec a = adapter.apply(base_cache.get_or_encode(selection[i].sentence_a, base));
    Vec b = adapter.apply(base_cache.get_or_encode(selection[i].sentence_b, base));
    pred[i] = cosine_similarity(a, b);
    gold[i] = selection[i].gold_score;
  }
  return spearman(pred, gold);
}

}  // namespace

TrainResult train(const std::vector<TrainingSample>& samples, AdapterEncoder adapter,
                  const TrainerConfig& config, const std::vector<StsPair>* selection_set) {
  config.validate();
  if (samples.empty()) throw DomainError("cannot train on an empty sample list");

  VectorCache base_cache;
  const Encoder& base = adapter.base();
  const std::size_t k = config.hard_negatives_per_sample;

  const std::size_t n = samples.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.max_epochs;
  const std::size_t warmup_steps =
      static_cast<std::size_t>(std::llround(config.warmup_fraction * static_cast<double>(total_steps)));

  TrainLog log;
  SplitMix64 rng(mix64(config.seed, fnv1a64("train-shuffle")));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<double> best_weights;
  std::vector<double> best_bias;

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      std::size_t end = std::min(n, begin + config.batch_size);
      ContrastiveBatch batch;
      batch.anchors.reserve(end - begin);
      batch.positives.reserve(end - begin);
      batch.hard_negatives.resize(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const TrainingSample& s = samples[order[b]];
        batch.anchors.push_back(base_cache.get_or_encode(s.anchor_text, base));
        batch.positives.push_back(base_cache.get_or_encode(s.positive_text, base));
        auto& negs = batch.hard_negatives[b - begin];
        for (std::size_t j = 0; j < std::min(k, s.hard_negatives.size()); ++j) {
          negs.push_back(base_cache.get_or_encode(s.hard_negatives[j].text, base));
        }
      }

      double lr = (warmup_steps > 0 && step < warmup_steps)
                      ? config.learning_rate * static_cast<double>(step) /
                            static_cast<double>(warmup_steps)
                      : config.learning_rate;

      AdapterGradient grad =
          loss_gradient(batch, adapter, config.temperature, config.own_negatives_only);

      if (config.max_gradient_norm > 0.0) {
        double norm_sq = 0.0;
        for (double g : grad.weights) norm_sq += g * g;
        for (double g : grad.bias) norm_sq += g * g;
        double norm = std::sqrt(norm_sq);
        if (norm > config.max_gradient_norm) {
          double scale = config.max_gradient_norm / norm;
          for (double& g : grad.weights) g *= scale;
          for (double& g : grad.bias) g *= scale;
        }
      }

      // decoupled weight decay: W <- W * (1 - lr*wd) - lr * dW
      double decay = 1.0 - lr * config.weight_decay;
      std::vector<double>& w = adapter.weights();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = w[i] * decay - lr * grad.weights[i];
      }
      std::vector<double>& bias = adapter.bias();
      for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= lr * grad.bias[i];

      log.steps.push_back({epoch, step, lr, grad.loss});
      ++step;
    }

    EpochRecord record;
    record.epoch = epoch;
    if (selection_set && !selection_set->empty()) {
      try {
        record.selection_score = selection_spearman(adapter, base_cache, *selection_set);
      } catch (const Error& e) {
        log.warnings.push_back("epoch " + std::to_string(epoch) +
                               ": selection scoring failed: " + e.what());
      }
      if (record.selection_score &&
          (best_epoch == 0 || *record.selection_score > best_score)) {
        best_score = *record.selection_score;
        best_epoch = epoch;
        best_weights = adapter.weights();
        best_bias = adapter.bias();
      }
    }
    log.epochs.push_back(std::move(record));
  }

  if (best_epoch > 0) {
    adapter.weights() = std::move(best_weights);
    adapter.bias() = std::move(best_bias);
    log.best_epoch = best_epoch;
  } else if (selection_set) {
    log.warnings.push_back("selection never produced a score; keeping final epoch weights");
  }
  return TrainResult{std::move(adapter), std::move(log)};
}

std::string dump_train_log(const TrainLog& log) {
  std::string out;
  std::size_t epoch_cursor = 0;
  auto flush_epochs_before = [&](std::size_t epoch) {
    while (epoch_cursor < log.epochs.size() && log.epochs[epoch_cursor].epoch < epoch) {
      const EpochRecord& e = log.epochs[epoch_cursor];
      json doc;
      doc["epoch"] = e.epoch;
      if (e.selection_score) {
        doc["selection_score"] = *e.selection_score;
      } else {
        doc["selection_score"] = nullptr;
      }
      out += doc.dump();
      out += '\n';
      ++epoch_cursor;
    }
  };
  for (const StepRecord& s : log.steps) {
    flush_epochs_before(s.epoch);
    json doc;
    doc["step"] = s.step;
    doc["lr"] = s.lr;
    doc["loss"] = s.loss;
    out += doc.dump();
    out += '\n';
  }
  flush_epochs_before(std::numeric_limits<std::size_t>::max());
  if (log.best_epoch > 0) {
    json doc;
    doc["best_epoch"] = log.best_epoch;
    out += doc.dump();
    out += '\n';
  }
  for (const std::string& w : log.warnings) {
    json doc;
    doc["warning"] = w;
    out += doc.dump();
    out += '\n';
  }
  return out;
}

}  // namespace oki
