#include "fishdet/train.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "fishdet/kernels.hpp"

namespace fishdet::train {

Splits split(std::span<const std::int64_t> vessels, const SplitSpec& spec) {
  std::vector<std::int64_t> ids(vessels.begin(), vessels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < spec.n_test + spec.n_val + 1) {
    throw std::invalid_argument("split: " + std::to_string(ids.size()) + " vessels cannot hold " +
                                std::to_string(spec.n_test) + " test + " +
                                std::to_string(spec.n_val) + " validation + >=1 train");
  }
  Rng rng(spec.seed);
  rng.shuffle(ids);
  Splits out;
  out.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(spec.n_test));
  out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(spec.n_test),
                 ids.begin() + static_cast<std::ptrdiff_t>(spec.n_test + spec.n_val));
  out.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(spec.n_test + spec.n_val), ids.end());
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

template <typename T>
LossTerms<T> loss(nn::Tape<T>& tape, nn::Var logits, nn::Var embedding, std::span<const T> y,
                  nn::Var centers, const LossWeights& w) {
  const std::size_t b = y.size();
  std::vector<int> cls(b);
  for (std::size_t i = 0; i < b; ++i) cls[i] = y[i] > T(0.5) ? 1 : 0;
  LossTerms<T> out;
  out.bce = tape.bce_with_logits(logits, y);
  const nn::Var diff = tape.sub(embedding, tape.gather_rows(centers, cls));
  out.center = tape.scale(tape.sum(tape.mul(diff, diff)), static_cast<T>(0.5 / static_cast<double>(b)));
  out.total = tape.add(tape.scale(out.center, static_cast<T>(w.center)),
                       tape.scale(out.bce, static_cast<T>(w.bce)));
  return out;
}

template LossTerms<float> loss<float>(nn::Tape<float>&, nn::Var, nn::Var, std::span<const float>,
                                      nn::Var, const LossWeights&);
template LossTerms<double> loss<double>(nn::Tape<double>&, nn::Var, nn::Var,
                                        std::span<const double>, nn::Var, const LossWeights&);

AdamW::AdamW(std::vector<nn::Parameter<float>*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto* p : params_) {
    m_.emplace_back(p->value.numel(), 0.0);
    v_.emplace_back(p->value.numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& theta = params_[i]->value.data;
    const auto& g = params_[i]->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      const double old = theta[k];
      theta[k] = static_cast<float>(old - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps)) -
                                    cfg_.lr * cfg_.weight_decay * old);
    }
  }
}

double global_grad_norm(std::span<nn::Parameter<float>* const> params) {
  double ss = 0.0;
  for (const auto* p : params)
    for (float g : p->grad.data) ss += static_cast<double>(g) * g;
  return std::sqrt(ss);
}

double clip_gradients(std::span<nn::Parameter<float>* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto* p : params)
      for (auto& g : p->grad.data) g = static_cast<float>(g * factor);
  }
  return norm;
}

double PlateauScheduler::step(double metric, double lr) {
  if (metric < best_) {
    best_ = metric;
    bad_ = 0;
    return lr;
  }
  if (++bad_ >= patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

bool EarlyStopping::update(int epoch, double metric) {
  if (metric < best_) {
    best_ = metric;
    best_epoch_ = epoch;
    bad_ = 0;
    return true;
  }
  ++bad_;
  return false;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"clip_norm", clip_norm},
          {"lambda_cl", loss.center},
          {"lambda_bce", loss.bce},
          {"weight_decay", weight_decay},
          {"batch", batch},
          {"scheduler_factor", scheduler_factor},
          {"scheduler_patience", scheduler_patience},
          {"early_stop_patience", early_stop_patience},
          {"max_epochs", max_epochs},
          {"stride", stride},
          {"seed", seed}};
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"train_bce", train_bce},
          {"val_bce", val_bce}, {"lr", lr}};
}

double validation_bce(const Checkpoint& ck, const WindowSet& raw) {
  if (raw.size() == 0) throw std::invalid_argument("validation set has no windows");
  const auto logits = kernels::infer_batch(ck.config, ck.weights, ck.norm.normalized(raw.x));
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    acc += std::max(z, 0.0) - z * raw.y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return acc / static_cast<double>(logits.size());
}

FitResult fit(const TrainConfig& cfg, const model::ModelConfig& mcfg, const WindowSet& train,
              const WindowSet& val, const NormStats& stats,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  mcfg.validate();
  if (train.size() == 0) throw std::invalid_argument("training set has no windows");
  if (val.size() == 0) throw std::invalid_argument("validation set has no windows");
  if (train.window() != static_cast<std::size_t>(mcfg.w) || val.window() != train.window()) {
    throw std::invalid_argument("window length does not match the model config");
  }
  if (cfg.batch == 0) throw std::invalid_argument("batch size must be > 0");

  const nn::Tensor<float> x = stats.normalized(train.x);
  const std::size_t w = train.window();
  const std::size_t row = w * 4;

  Checkpoint current;
  current.config = mcfg;
  current.weights = model::init_weights<float>(mcfg, mcfg.seed);
  current.norm = stats;
  auto params = current.weights.parameters();
  AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  PlateauScheduler scheduler(cfg.scheduler_factor, cfg.scheduler_patience);
  EarlyStopping stopper(cfg.early_stop_patience);
  Rng shuffle_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  FitResult result;
  result.checkpoint = current;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Tape<float> tape;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double bce_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t bs = std::min(cfg.batch, order.size() - start);
      nn::Tensor<float> xb({bs, w, 4});
      std::vector<float> yb(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        const std::size_t r = order[start + i];
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r * row), row,
                    xb.data.begin() + static_cast<std::ptrdiff_t>(i * row));
        yb[i] = train.y[r];
      }
      double batch_loss = 0.0;
      try {
        tape.clear();
        current.weights.zero_grad();
        auto out = model::forward(tape, mcfg, current.weights, xb, true, dropout_rng);
        auto terms = loss<float>(tape, out.logits, out.embedding, yb,
                                 tape.param(current.weights.centers), cfg.loss);
        batch_loss = tape.value(terms.total)[0];
        bce_sum += tape.value(terms.bce)[0] * static_cast<double>(bs);
        tape.backward(terms.total);
      } catch (const NumericFault& e) {
        throw TrainingAborted(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(),
                              result.checkpoint);
      }
      clip_gradients(params, cfg.clip_norm);
      opt.step();
      loss_sum += batch_loss * static_cast<double>(bs);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_bce = bce_sum / static_cast<double>(order.size());
    rec.lr = opt.lr();
    rec.val_bce = validation_bce(current, val);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_bce)) {
      throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch),
                            result.checkpoint);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.update(epoch, rec.val_bce)) result.checkpoint.weights = current.weights;
    opt.set_lr(scheduler.step(rec.val_bce, opt.lr()));
    if (stopper.should_stop()) break;
  }

  result.best_epoch = stopper.best_epoch();
  result.checkpoint.metadata = {{"train_config", cfg.to_json()},
                                {"best_epoch", result.best_epoch},
                                {"best_val_bce", stopper.best()},
                                {"epochs_run", result.history.size()},
                                {"train_windows", train.size()},
                                {"val_windows", val.size()}};
  return result;
}

PreparedData prepare(const std::vector<labeling::LabeledTrajectory>& data, const SplitSpec& spec,
                     std::size_t w, std::size_t stride) {
  std::vector<std::int64_t> ids;
  for (const auto& t : data) ids.push_back(t.mmsi);
  PreparedData out;
  out.splits = split(ids, spec);
  const auto tr = subset(data, out.splits.train);
  out.stats = NormStats::fit(tr, w, stride);
  out.train = make_windows(tr, w, stride);
  out.val = make_windows(subset(data, out.splits.val), w, stride);
  out.test = make_windows(subset(data, out.splits.test), w, stride);
  return out;
}

}  // namespace fishdet::train
