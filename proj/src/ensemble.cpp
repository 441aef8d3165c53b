#include "fishdet/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fishdet/errors.hpp"

namespace fishdet::ensemble {

std::string_view to_string(Mode m) { return m == Mode::soft ? "soft" : "hard"; }

Mode parse_mode(std::string_view s) {
  if (s == "soft") return Mode::soft;
  if (s == "hard") return Mode::hard;
  throw std::invalid_argument("unknown ensemble mode '" + std::string(s) + "' (soft|hard)");
}

Ensemble::Ensemble(std::array<Checkpoint, 3> members, Mode mode, bool average_probabilities)
    : members_(std::move(members)), mode_(mode), average_probabilities_(average_probabilities) {
  for (std::size_t i = 1; i < members_.size(); ++i) {
    if (members_[i].config.w != members_[0].config.w ||
        members_[i].config.v != members_[0].config.v) {
      throw ConfigError("ensemble member " + std::to_string(i) + " has window " +
                        std::to_string(members_[i].config.w) + "x" +
                        std::to_string(members_[i].config.v) + ", expected " +
                        std::to_string(members_[0].config.w) + "x" +
                        std::to_string(members_[0].config.v));
    }
  }
}

std::size_t Ensemble::param_count() const {
  std::size_t n = 0;
  for (const auto& m : members_) n += model::count_params(m.config).total;
  return n;
}

Prediction Ensemble::combine(std::span<const float, 3> logits) const {
  Prediction p;
  for (std::size_t i = 0; i < 3; ++i) p.members[i] = nn::sigmoid_scalar<double>(logits[i]);
  if (mode_ == Mode::soft) {
    int votes = 0;
    for (float l : logits) votes += eval::is_fishing(l) ? 1 : 0;
    p.fishing = votes >= 2;
    p.probability = votes / 3.0;
  } else if (average_probabilities_) {
    p.probability = (p.members[0] + p.members[1] + p.members[2]) / 3.0;
    p.fishing = p.probability >= 0.5;
  } else {
    const double mean = (static_cast<double>(logits[0]) + logits[1] + logits[2]) / 3.0;
    p.probability = nn::sigmoid_scalar<double>(mean);
    p.fishing = mean >= 0.0;
  }
  return p;
}

float Ensemble::member_logit(std::size_t m, std::span<const float> raw_window,
                             kernels::InferenceScratch& scratch) const {
  const auto& ck = members_[m];
  std::vector<float> norm(raw_window.begin(), raw_window.end());
  ck.norm.apply(norm);
  return kernels::infer_window(ck.config, ck.weights, norm, scratch);
}

Prediction Ensemble::predict(std::span<const float> raw_window) const {
  const auto expected = static_cast<std::size_t>(window()) * model::kInputs;
  if (raw_window.size() != expected) {
    throw ConfigError("ensemble window has " + std::to_string(raw_window.size()) +
                      " values, expected " + std::to_string(expected));
  }
  kernels::InferenceScratch scratch;
  std::array<float, 3> logits{};
  for (std::size_t m = 0; m < 3; ++m) logits[m] = member_logit(m, raw_window, scratch);
  return combine(logits);
}

std::vector<Prediction> Ensemble::predict(const train::WindowSet& raw) const {
  if (raw.window() != static_cast<std::size_t>(window())) {
    throw ConfigError("ensemble expects windows of " + std::to_string(window()) + " messages");
  }
  std::array<std::vector<float>, 3> logits;
  for (std::size_t m = 0; m < 3; ++m) {
    logits[m] = kernels::infer_batch(members_[m].config, members_[m].weights,
                                     members_[m].norm.normalized(raw.x));
  }
  std::vector<Prediction> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::array<float, 3> l = {logits[0][i], logits[1][i], logits[2][i]};
    out[i] = combine(l);
  }
  return out;
}

nlohmann::json EnsembleReport::to_json() const {
  return {{"mode", to_string(mode)},
          {"confusion", cm.to_json()},
          {"rates", {{"tn", tn_rate}, {"fp", fp_rate}, {"tp", tp_rate}, {"fn", fn_rate}}},
          {"macro_f1", metrics.macro.f1},
          {"sailing_f1", metrics.sailing.f1},
          {"fishing_f1", metrics.fishing.f1},
          {"params", params}};
}

EnsembleReport evaluate_ensemble(const Ensemble& e, const train::WindowSet& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate_ensemble: empty test set");
  if (test.y.size() != test.size()) throw std::invalid_argument("evaluate_ensemble: unlabeled windows");
  const auto preds = e.predict(test);
  EnsembleReport r;
  r.mode = e.mode();
  r.params = e.param_count();
  for (std::size_t i = 0; i < preds.size(); ++i) r.cm.add(preds[i].fishing, test.y[i] > 0.5f);
  r.metrics = eval::metrics(r.cm);
  const double neg = static_cast<double>(r.cm.tn + r.cm.fp);
  const double pos = static_cast<double>(r.cm.tp + r.cm.fn);
  if (neg > 0) {
    r.tn_rate = r.cm.tn / neg;
    r.fp_rate = r.cm.fp / neg;
  }
  if (pos > 0) {
    r.tp_rate = r.cm.tp / pos;
    r.fn_rate = r.cm.fn / pos;
  }
  return r;
}

}  // namespace fishdet::ensemble
