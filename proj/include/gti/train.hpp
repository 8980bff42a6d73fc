#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gti/data.hpp"
#include "gti/errors.hpp"
#include "gti/eval.hpp"
#include "gti/model.hpp"
#include "gti/params.hpp"

namespace gti {

struct TrainConfig {
  double alpha0 = 0.001;
  std::size_t total_epochs = 270;  // schedule period T
  std::size_t num_cycles = 9;      // restarts M; cycle length is T/M
  std::size_t epoch_cap = 70;      // hard stop, independent of the schedule
  std::size_t batch_size = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool clip_gradients = false;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

// Cosine schedule with warm restarts: the rate decays from alpha0 to 0
// across each cycle and snaps back at the cycle boundary.
inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
  if (c.num_cycles == 0) throw ArgumentError("schedule: num_cycles must be positive");
  double cycle = static_cast<double>(c.total_epochs) / static_cast<double>(c.num_cycles);
  double p = std::fmod(static_cast<double>(epoch), cycle) / cycle;
  return c.alpha0 / 2.0 * (1.0 + std::cos(std::numbers::pi * p));
}

struct OptimizerState {
  std::uint64_t t = 0;
  std::unordered_map<std::string, Tensor> m;
  std::unordered_map<std::string, Tensor> v;

  Tensor& slot(std::unordered_map<std::string, Tensor>& map, const std::string& name,
               const Tensor& like) {
    auto it = map.find(name);
    if (it == map.end()) it = map.emplace(name, Tensor(like.rows, like.cols)).first;
    return it->second;
  }
};

// Nadam: Adam moments with the momentum term applied one step ahead.
// Updates every trainable parameter from its accumulated gradient.
inline void nadam_update(ParamStore& ps, OptimizerState& st, double lr,
                         const TrainConfig& c) {
  std::vector<std::string> trainable;
  for (const std::string& name : ps.names())
    if (ps.at(name).requires_grad) trainable.push_back(name);

  for (const std::string& name : trainable) {
    Node& n = ps.at(name);
    n.ensure_grad();
    for (double g : n.grad.data)
      if (!std::isfinite(g))
        throw NumericalError("non-finite gradient in parameter '" + name + "'");
  }

  if (c.clip_gradients) {
    double sq = 0.0;
    for (const std::string& name : trainable)
      for (double g : ps.at(name).grad.data) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > c.clip_norm) {
      double s = c.clip_norm / norm;
      for (const std::string& name : trainable)
        for (double& g : ps.at(name).grad.data) g *= s;
    }
  }

  st.t += 1;
  double t = static_cast<double>(st.t);
  double bias1 = 1.0 - std::pow(c.beta1, t);
  double bias1_next = 1.0 - std::pow(c.beta1, t + 1.0);
  double bias2 = 1.0 - std::pow(c.beta2, t);
  for (const std::string& name : trainable) {
    Node& n = ps.at(name);
    Tensor& m = st.slot(st.m, name, n.value);
    Tensor& v = st.slot(st.v, name, n.value);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      double g = n.grad.data[i];
      m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g;
      v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g * g;
      double m_bar = c.beta1 * m.data[i] / bias1_next + (1.0 - c.beta1) * g / bias1;
      n.value.data[i] -= lr * m_bar / (std::sqrt(v.data[i] / bias2) + c.eps);
    }
  }
}

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_score = 0.0;
  bool is_best = false;
};

struct FitResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
  std::vector<EpochStats> history;
};

// Span main tasks score dev micro-F1; non-span tasks token accuracy.
inline double score_main_task(GtiModel& model, const std::vector<EncodedSentence>& data) {
  if (data.empty()) throw ArgumentError("score: no sentences");
  std::size_t main_idx = model.n_tasks() - 1;
  const TaskConfig& task = model.spec().main;
  std::vector<std::vector<int>> gold_ids, pred_ids;
  for (const EncodedSentence& s : data) {
    if (s.tags.size() <= main_idx)
      throw ArgumentError("score: sentence lacks gold tags for the main task");
    gold_ids.push_back(s.tags[main_idx]);
    pred_ids.push_back(model.predict(s).main_tags);
  }
  if (!task.is_span) return token_accuracy(gold_ids, pred_ids);
  auto to_names = [&](const std::vector<std::vector<int>>& ids) {
    std::vector<std::vector<std::string>> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int id : ids[i]) out[i].push_back(task.tags[static_cast<std::size_t>(id)]);
    return out;
  };
  return micro_f1(to_names(gold_ids), to_names(pred_ids)).f1;
}

// Drives the whole optimization: shuffled batches per epoch, one Nadam
// step per batch, dev scored after every epoch, strictly-better best
// tracking. Dropout and shuffling draw from separate seeded streams so
// a run is reproducible bit for bit.
class Trainer {
 public:
  Trainer(GtiModel& model, TrainConfig cfg)
      : model_(model),
        cfg_(cfg),
        shuffle_rng_(cfg.seed ^ kShuffleSalt),
        dropout_rng_(cfg.seed ^ kDropoutSalt) {}

  const TrainConfig& config() const { return cfg_; }
  OptimizerState& optimizer() { return opt_; }
  std::mt19937_64& shuffle_rng() { return shuffle_rng_; }
  std::mt19937_64& dropout_rng() { return dropout_rng_; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t e) { epoch_ = e; }

  double step(const Batch& batch, double lr) {
    model_.params().zero_grad();
    Graph g;
    Value loss = model_.batch_loss(g, batch, Mode::kTrain, &dropout_rng_);
    double lv = loss.scalar();
    if (!std::isfinite(lv)) throw NumericalError("non-finite training loss");
    g.backward(loss);
    nadam_update(model_.params(), opt_, lr, cfg_);
    return lv;
  }

  double run_epoch(const std::vector<EncodedSentence>& train) {
    if (train.empty()) throw ArgumentError("fit: no training sentences");
    std::vector<Batch> batches = make_batches(train, cfg_.batch_size, shuffle_rng_);
    double lr = learning_rate(cfg_, epoch_);
    double total = 0.0;
    for (const Batch& b : batches) total += step(b, lr);
    epoch_ += 1;
    return total / static_cast<double>(batches.size());
  }

  FitResult fit(const std::vector<EncodedSentence>& train,
                const std::vector<EncodedSentence>& dev,
                const std::function<void(const EpochStats&)>& on_epoch = {},
                const std::function<bool(const EpochStats&)>& stop_early = {}) {
    FitResult res;
    std::unordered_map<std::string, Tensor> best;
    while (epoch_ < cfg_.epoch_cap) {
      EpochStats st;
      st.epoch = epoch_;
      st.lr = learning_rate(cfg_, epoch_);
      st.train_loss = run_epoch(train);
      st.dev_score = score_main_task(model_, dev);
      if (st.dev_score > res.best_score) {
        st.is_best = true;
        res.best_score = st.dev_score;
        res.best_epoch = st.epoch;
        best.clear();
        for (const std::string& name : model_.params().names())
          best.emplace(name, model_.params().at(name).value);
      }
      res.history.push_back(st);
      res.epochs_run = epoch_;
      if (on_epoch) on_epoch(st);
      if (stop_early && stop_early(st)) break;
    }
    for (auto& [name, value] : best) model_.params().at(name).value = value;
    return res;
  }

 private:
  GtiModel& model_;
  TrainConfig cfg_;
  OptimizerState opt_;
  std::mt19937_64 shuffle_rng_;
  std::mt19937_64 dropout_rng_;
  std::size_t epoch_ = 0;

  static constexpr std::uint64_t kShuffleSalt = 0x5deece66dULL;
  static constexpr std::uint64_t kDropoutSalt = 0x9e3779b97f4a7c15ULL;
};

}  // namespace gti
