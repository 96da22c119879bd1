// SPDX-License-Identifier: Apache-2.0
#include "attmerge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include "attmerge/random.hpp"

namespace attmerge {

void Schedule::validate() const {
  if (!(warmup_epochs >= 1 && warmup_epochs < unfreeze_epoch && unfreeze_epoch <= total_epochs)) {
    throw std::invalid_argument("schedule needs 1 <= warmup_epochs < unfreeze_epoch <= total_epochs (got " +
                                std::to_string(warmup_epochs) + ", " + std::to_string(unfreeze_epoch) +
                                ", " + std::to_string(total_epochs) + ")");
  }
  if (!(decay_rate > 0.0 && decay_rate < 1.0)) {
    throw std::invalid_argument("schedule decay_rate must lie in (0, 1)");
  }
  if (!(peak_lr > 0.0)) throw std::invalid_argument("schedule peak_lr must be positive");
}

std::string_view to_string(Strategy s) { return s == Strategy::fine_tuned ? "fine-tuned" : "fixed"; }

std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "fine-tuned") return Strategy::fine_tuned;
  if (s == "fixed") return Strategy::fixed;
  return std::nullopt;
}

double lr_at(int epoch, const Schedule &schedule) {
  schedule.validate();
  if (epoch < 1 || epoch > schedule.total_epochs) {
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [1, " +
                            std::to_string(schedule.total_epochs) + "]");
  }
  if (epoch <= schedule.warmup_epochs) {
    return schedule.peak_lr * static_cast<double>(epoch) / static_cast<double>(schedule.warmup_epochs);
  }
  return schedule.peak_lr * std::pow(schedule.decay_rate, epoch - schedule.warmup_epochs);
}

FreezePlan frozen_at(int epoch, const Schedule &schedule, Strategy strategy) {
  FreezePlan plan;
  plan.encoder_frozen = strategy == Strategy::fixed || epoch < schedule.unfreeze_epoch;
  return plan;
}

std::vector<Batch> make_batches(std::span<const LabeledStack> data, std::size_t batch_size,
                                std::uint64_t seed, int epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "shuffle", static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    Batch b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) b.push_back(&data[order[j]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

double batch_loss_and_grads(Model &model, const Batch &batch, std::vector<Tensor> &grads) {
  auto refs = model.params();
  grads.clear();
  for (const auto &r : refs) grads.emplace_back(r.ref.tensor->shape());
  if (batch.empty()) throw std::invalid_argument("empty batch");

  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const LabeledStack *item : batch) {
    Tape tape;
    ForwardPass pass = forward(tape, model, item->stack.data, true);
    Var loss = cross_entropy(pass.logits, class_index(item->label));
    const double value = loss.value().item();
    total += value;
    if (!std::isfinite(value)) continue;
    tape.backward(loss);
    for (std::size_t i = 0; i < pass.leaves.size(); ++i) {
      if (!pass.leaves[i].requires_grad()) continue;
      const Tensor g = tape.grad(pass.leaves[i]);
      for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += inv * g[j];
    }
  }
  return total * inv;
}

void adam_step(Tensor &param, const Tensor &grad, AdamMoments &mom, double lr, const AdamConfig &adam) {
  if (grad.shape() != param.shape()) {
    throw ShapeError("adam_step: gradient " + to_string(grad.shape()) + " for parameter " +
                     to_string(param.shape()));
  }
  if (mom.m.shape() != param.shape()) {
    mom = AdamMoments{Tensor(param.shape()), Tensor(param.shape()), 0};
  }
  ++mom.steps;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(mom.steps));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(mom.steps));
  for (std::size_t j = 0; j < param.size(); ++j) {
    mom.m[j] = adam.beta1 * mom.m[j] + (1.0 - adam.beta1) * grad[j];
    mom.v[j] = adam.beta2 * mom.v[j] + (1.0 - adam.beta2) * grad[j] * grad[j];
    param[j] -= lr * (mom.m[j] / c1) / (std::sqrt(mom.v[j] / c2) + adam.eps);
  }
}

double train_epoch(Model &model, TrainState &state, const Schedule &schedule,
                   std::span<const Batch> batches, const TrainOptions &options) {
  if (batches.empty()) throw std::invalid_argument("train_epoch: no batches");
  const FreezePlan plan = frozen_at(state.epoch, schedule, options.strategy);
  set_frozen(model.encoder, plan.encoder_frozen);
  state.encoder_frozen = plan.encoder_frozen;
  const double lr = lr_at(state.epoch, schedule);
  const AdamConfig &adam = options.adam;

  double loss_sum = 0.0;
  std::size_t count = 0;
  std::vector<Tensor> grads;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const double loss = batch_loss_and_grads(model, batches[b], grads);
    if (!std::isfinite(loss)) {
      std::string ids;
      for (const auto *item : batches[b]) ids += (ids.empty() ? "" : ",") + item->stack.utterance_id;
      throw TrainingError("non-finite loss in epoch " + std::to_string(state.epoch) + ", batch " +
                          std::to_string(b) + " (utterances " + ids + ")");
    }
    loss_sum += loss * static_cast<double>(batches[b].size());
    count += batches[b].size();

    auto refs = model.params();
    auto trainable = [&](const ModelParamRef &r) {
      switch (r.group) {
      case ParamGroup::encoder: return !plan.encoder_frozen;
      case ParamGroup::merge: return plan.merge_trainable;
      case ParamGroup::head: return plan.head_trainable;
      }
      return false;
    };

    if (options.max_grad_norm > 0.0) {
      double sq = 0.0;
      for (std::size_t i = 0; i < refs.size(); ++i)
        if (trainable(refs[i]))
          for (double g : grads[i].data()) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > options.max_grad_norm) {
        const double factor = options.max_grad_norm / norm;
        for (auto &g : grads)
          for (auto &v : g.data()) v *= factor;
      }
    }

    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (!trainable(refs[i])) continue;
      adam_step(*refs[i].ref.tensor, grads[i], state.moments[refs[i].ref.name], lr, adam);
    }
  }
  ++state.epoch;
  return loss_sum / static_cast<double>(count);
}

void write_log_csv(std::ostream &out, std::span<const EpochLog> log) {
  out << "epoch,lr,frozen_flag,train_loss,dev_eer\n";
  char buf[160];
  for (const auto &e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%s,%.17g,%.17g\n", e.epoch, e.lr,
                  e.encoder_frozen ? "true" : "false", e.train_loss, e.dev_eer);
    out << buf;
  }
}

ScoreSet score_dataset(const Model &model, std::span<const LabeledStack> data, std::size_t workers) {
  std::vector<double> scores(data.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) scores[i] = score(model, data[i].stack);
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, data.size()));
  if (workers == 1) {
    run(0, data.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (data.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(data.size(), begin + chunk);
      if (begin < end) threads.emplace_back(run, begin, end);
    }
    for (auto &t : threads) t.join();
  }
  ScoreSet set;
  for (std::size_t i = 0; i < data.size(); ++i) {
    set.add(ScoreRecord{data[i].stack.utterance_id, data[i].label, scores[i]});
  }
  return set;
}

FitResult fit(Model model, std::span<const LabeledStack> train, std::span<const LabeledStack> dev,
              const Schedule &schedule, const TrainOptions &options, std::uint64_t seed,
              const std::function<void(const EpochLog &)> &on_epoch) {
  schedule.validate();
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  TrainState state;
  state.seed = seed;
  FitResult result;
  result.best = model;
  bool have_best = false;
  for (int epoch = 1; epoch <= schedule.total_epochs; ++epoch) {
    const auto batches = make_batches(train, options.batch_size, seed, epoch);
    const double lr = lr_at(epoch, schedule);
    const double loss = train_epoch(model, state, schedule, batches, options);
    const double dev_eer = compute_eer(score_dataset(model, dev, options.scoring_workers));
    EpochLog entry{epoch, lr, state.encoder_frozen, loss, dev_eer};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!have_best || dev_eer <= result.best_dev_eer) {
      have_best = true;
      result.best = model;
      result.best_epoch = epoch;
      result.best_dev_eer = dev_eer;
    }
  }
  return result;
}

} // namespace attmerge
