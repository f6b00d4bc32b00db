#include "hiercas/training.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "hiercas/errors.hpp"
#include "hiercas/parallel.hpp"
#include "hiercas/random.hpp"

namespace hiercas::train {

using ad::Tensor;
using model::ParamKind;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
}

OptimizerState OptimizerState::zeros_like(const model::ModelParams& params) {
  OptimizerState s;
  for (const model::Parameter& p : params.list()) {
    s.m.push_back(Tensor::zeros_like(p.value));
    s.v.push_back(Tensor::zeros_like(p.value));
  }
  return s;
}

void adamw_step(model::ModelParams& params, std::span<const Tensor> grads, OptimizerState& state,
                const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adamw_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size()) {
      throw DimensionError("adamw_step: gradient shape " + ad::shape_string(grads[i].shape()) +
                           " for parameter " + params[i].name + " " +
                           ad::shape_string(params[i].value.shape()));
    }
    for (double g : grads[i].data()) {
      if (!std::isfinite(g)) {
        throw DomainError("non-finite gradient in parameter " + params[i].name);
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].value;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    const bool decay = params[i].kind == ParamKind::kDense && cfg.weight_decay > 0.0;
    const double shrink = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      if (decay) theta[k] *= shrink;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& x : g.data()) x *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

MetricsReport compute_metrics(std::span<const double> predicted_log,
                              std::span<const double> truth_log) {
  if (predicted_log.empty() || predicted_log.size() != truth_log.size()) {
    throw ArgumentError("compute_metrics: need equally many (>= 1) predictions and truths");
  }
  const double n = static_cast<double>(truth_log.size());
  double sse = 0.0;
  double smape = 0.0;
  double mean_truth = 0.0;
  for (std::size_t i = 0; i < truth_log.size(); ++i) {
    const double diff = truth_log[i] - predicted_log[i];
    sse += diff * diff;
    const double denom = (std::abs(truth_log[i]) + std::abs(predicted_log[i])) / 2.0;
    if (denom > 0.0) smape += std::abs(diff) / denom;
    mean_truth += truth_log[i];
  }
  mean_truth /= n;
  double sst = 0.0;
  for (double y : truth_log) sst += (y - mean_truth) * (y - mean_truth);

  MetricsReport report;
  report.msle = sse / n;
  report.smape = smape / n;
  if (sst > 0.0) report.r2 = 1.0 - sse / sst;
  return report;
}

std::string metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["msle"] = report.msle;
  j["smape"] = report.smape;
  j["r2"] = report.r2 ? nlohmann::ordered_json(*report.r2) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

std::uint64_t cascade_sample_seed(std::uint64_t base, const std::string& cascade_id) {
  return mix_seed(base, fnv1a64(cascade_id));
}

std::uint64_t eval_sample_seed(std::uint64_t seed) {
  return mix_seed(seed, 0x6576616c5f736565ULL);
}

MetricsReport evaluate(const model::HierCas& model, std::span<const data::LabeledCascade> data,
                       std::uint64_t sample_seed, std::size_t threads) {
  if (data.empty()) throw ArgumentError("evaluate: empty dataset");
  std::vector<double> pred(data.size());
  std::vector<double> truth(data.size());
  parallel_for(data.size(), resolve_threads(threads), [&](std::size_t i) {
    const auto& c = data[i];
    pred[i] = model::predict(model, c.graph, cascade_sample_seed(sample_seed, c.graph.id()));
  });
  for (std::size_t i = 0; i < data.size(); ++i) truth[i] = model::log_target(data[i].delta_p);
  MetricsReport report = compute_metrics(pred, truth);
  for (std::size_t i = 0; i < data.size(); ++i) {
    report.rows.push_back(PredictionRow{data[i].graph.id(), pred[i], truth[i]});
  }
  return report;
}

MetricsReport evaluate_constant(double predicted_log, std::span<const data::LabeledCascade> data) {
  if (data.empty()) throw ArgumentError("evaluate_constant: empty dataset");
  std::vector<double> pred(data.size(), predicted_log);
  std::vector<double> truth;
  for (const auto& c : data) truth.push_back(model::log_target(c.delta_p));
  MetricsReport report = compute_metrics(pred, truth);
  for (std::size_t i = 0; i < data.size(); ++i) {
    report.rows.push_back(PredictionRow{data[i].graph.id(), pred[i], truth[i]});
  }
  return report;
}

// ---------------------------------------------------------------------------

BatchResult batch_gradients(const model::HierCas& model,
                            std::span<const data::LabeledCascade* const> batch,
                            std::uint64_t sample_seed, std::size_t threads) {
  if (batch.empty()) throw ArgumentError("batch_gradients: empty batch");
  const std::size_t n_params = model.params.size();
  const double inv_m = 1.0 / static_cast<double>(batch.size());

  std::vector<std::vector<ad::LeafGrad>> per_item(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), resolve_threads(threads), [&](std::size_t i) {
    const data::LabeledCascade& c = *batch[i];
    ad::Tape tape;
    model::CascadeForward fwd(model, c.graph, tape, cascade_sample_seed(sample_seed, c.graph.id()));
    ad::Var pred = fwd.predict();
    ad::Var target = tape.constant(Tensor(ad::Shape{1, 1}, model::log_target(c.delta_p)));
    ad::Var loss = ad::scale(ad::square(ad::sub(pred, target)), inv_m);
    losses[i] = loss.value().item();
    tape.backward(loss);
    auto& grads = per_item[i];
    grads.reserve(n_params);
    for (std::size_t p = 0; p < n_params; ++p) grads.push_back(tape.take_leaf_grad(fwd.param(p)));
  });

  BatchResult out;
  out.grads.reserve(n_params);
  for (const model::Parameter& p : model.params.list()) out.grads.push_back(Tensor::zeros_like(p.value));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i];
    for (std::size_t p = 0; p < n_params; ++p) {
      const ad::LeafGrad& lg = per_item[i][p];
      Tensor& total = out.grads[p];
      if (!lg.dense.empty()) {
        for (std::size_t k = 0; k < total.size(); ++k) total[k] += lg.dense[k];
      }
      const std::size_t cols = total.cols();
      for (const auto& [row, values] : lg.rows) {
        for (std::size_t c = 0; c < cols; ++c) total[row * cols + c] += values[c];
      }
    }
  }
  return out;
}

TrainResult train(model::HierCas model, std::span<const data::LabeledCascade> train_set,
                  std::span<const data::LabeledCascade> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ArgumentError("train: empty training split");
  if (val_set.empty()) throw ArgumentError("train: empty validation split");
  const std::size_t threads = resolve_threads(cfg.threads);

  if (cfg.init_head_bias) {
    double mean_target = 0.0;
    for (const auto& c : train_set) mean_target += model::log_target(c.delta_p);
    mean_target /= static_cast<double>(train_set.size());
    model.params[model.params.layout().head_b].value[0] = mean_target;
  }

  OptimizerState state = OptimizerState::zeros_like(model.params);
  TrainResult result{model, state, {}, 0};
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const std::uint64_t val_seed = eval_sample_seed(cfg.seed);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5348554646ULL + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_below(shuffle_rng, i)]);
    }
    const std::uint64_t sample_seed =
        cfg.fixed_sampling ? mix_seed(cfg.seed, 0xf1edULL) : mix_seed(cfg.seed, epoch + 1);

    double epoch_loss = 0.0;
    std::vector<const data::LabeledCascade*> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set[order[k]]);
      BatchResult br = batch_gradients(model, batch, sample_seed, threads);
      epoch_loss += br.loss * static_cast<double>(batch.size());
      if (cfg.clip_norm > 0.0) clip_global_norm(br.grads, cfg.clip_norm);
      adamw_step(model.params, br.grads, state, cfg);
    }

    const MetricsReport val = evaluate(model, val_set, val_seed, threads);
    result.history.push_back(EpochRecord{epoch, epoch_loss / static_cast<double>(order.size()),
                                         val.msle, val.smape, val.r2});
    const bool keep_going = !on_epoch || on_epoch(result.history.back());
    if (!std::isfinite(val.msle) || val.msle > 1e6) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                " (validation MSLE " + std::to_string(val.msle) + ")",
                            result.history);
    }
    if (val.msle < best_val) {
      best_val = val.msle;
      result.best = model;
      result.state = state;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    if (!keep_going) break;
  }
  return result;
}

}  // namespace hiercas::train
