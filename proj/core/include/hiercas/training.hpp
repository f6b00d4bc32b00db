#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hiercas/cascade.hpp"
#include "hiercas/model.hpp"

namespace hiercas::train {

struct TrainConfig {
  double lr = 3e-5;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // not applied to embedding tables or omega/alpha
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double clip_norm = 5.0;      // global gradient norm cap; <= 0 disables
  bool fixed_sampling = false; // reuse one neighborhood draw for every epoch
  bool init_head_bias = true;  // start the head bias at the mean training target
  std::uint64_t seed = 0;
  std::size_t threads = 0;     // 0 = resolve_threads()

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// AdamW moments, one pair per parameter.
struct OptimizerState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const model::ModelParams& params);
};

/// One AdamW update with decoupled weight decay:
///   theta <- theta * (1 - lr * wd)            (dense parameters only)
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws DomainError naming the parameter if a gradient is not finite.
void adamw_step(model::ModelParams& params, std::span<const ad::Tensor> grads,
                OptimizerState& state, const TrainConfig& cfg);

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_global_norm(std::span<ad::Tensor> grads, double max_norm);

struct PredictionRow {
  std::string id;
  double predicted = 0.0;  // log2 scale
  double truth = 0.0;      // log2(delta_p + 1)
};

struct MetricsReport {
  double msle = 0.0;
  double smape = 0.0;
  std::optional<double> r2;  // absent when all truths are equal
  std::vector<PredictionRow> rows;
};

/// MSLE, SMAPE and R^2 of log-scale predictions against log-scale truths.
MetricsReport compute_metrics(std::span<const double> predicted_log,
                              std::span<const double> truth_log);

/// Metrics JSON object {"msle":..., "smape":..., "r2":...} (r2 null when
/// undefined).
std::string metrics_json(const MetricsReport& report);

/// Per-cascade neighborhood seed used for evaluation.
std::uint64_t cascade_sample_seed(std::uint64_t base, const std::string& cascade_id);
std::uint64_t eval_sample_seed(std::uint64_t seed);

MetricsReport evaluate(const model::HierCas& model, std::span<const data::LabeledCascade> data,
                       std::uint64_t sample_seed, std::size_t threads = 0);

/// Predictions of a constant log-scale model on `data`.
MetricsReport evaluate_constant(double predicted_log, std::span<const data::LabeledCascade> data);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_msle = 0.0;
  double val_smape = 0.0;
  std::optional<double> val_r2;
};

/// Raised when validation MSLE exceeds 1e6 or stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<EpochRecord> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const noexcept { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

struct TrainResult {
  model::HierCas best;
  OptimizerState state;  // optimizer state at the best epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

struct BatchResult {
  double loss = 0.0;                // MSLE over the batch
  std::vector<ad::Tensor> grads;    // one dense gradient per parameter
};

/// Loss and gradient of the batch MSLE. Cascades are evaluated in parallel;
/// per-cascade gradients are summed in batch order.
BatchResult batch_gradients(const model::HierCas& model,
                            std::span<const data::LabeledCascade* const> batch,
                            std::uint64_t sample_seed, std::size_t threads = 0);

/// Mini-batch AdamW over `train_set` with per-epoch validation, keeping the
/// parameters with the best validation MSLE and stopping once `patience`
/// consecutive epochs fail to improve on it. `on_epoch`, if set, sees every
/// epoch record as it is produced and ends training by returning false.
using EpochCallback = std::function<bool(const EpochRecord&)>;
TrainResult train(model::HierCas model, std::span<const data::LabeledCascade> train_set,
                  std::span<const data::LabeledCascade> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace hiercas::train
