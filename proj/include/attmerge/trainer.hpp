// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attmerge/dataio.hpp"
#include "attmerge/eval.hpp"
#include "attmerge/model.hpp"

namespace attmerge {

/// Three-stage fine-tuning plan, epochs 1-based:
///   1. epochs 1..warmup: lr ramps linearly to peak, encoder frozen;
///   2. later epochs: lr = peak · decay^(epoch - warmup);
///   3. from unfreeze_epoch on, the encoder is trained as well.
struct Schedule {
  int warmup_epochs = 5;
  double decay_rate = 0.9;
  int unfreeze_epoch = 11;
  double peak_lr = 1e-4;
  int total_epochs = 20;

  /// Requires warmup < unfreeze <= total, 0 < decay < 1, peak > 0.
  void validate() const;
};

enum class Strategy { fine_tuned, fixed };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

double lr_at(int epoch, const Schedule &schedule);

struct FreezePlan {
  bool encoder_frozen = true;
  bool merge_trainable = true;
  bool head_trainable = true;
};

FreezePlan frozen_at(int epoch, const Schedule &schedule, Strategy strategy = Strategy::fine_tuned);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
  std::uint64_t steps = 0;
};

/// One bias-corrected Adam update of `param` in place; increments the step
/// count and allocates the moments on first use.
void adam_step(Tensor &param, const Tensor &grad, AdamMoments &moments, double lr,
               const AdamConfig &config);

struct TrainState {
  int epoch = 1;
  std::uint64_t seed = 0;
  std::map<std::string, AdamMoments> moments;
  bool encoder_frozen = true;
};

inline std::size_t class_index(Label label) {
  return label == Label::bonafide ? kBonafideLogit : kSpoofLogit;
}

using Batch = std::vector<const LabeledStack *>;

/// Shuffles with the (seed, epoch) shuffle stream and cuts batches of at most
/// batch_size utterances.
std::vector<Batch> make_batches(std::span<const LabeledStack> data, std::size_t batch_size,
                                std::uint64_t seed, int epoch);

struct TrainOptions {
  Strategy strategy = Strategy::fine_tuned;
  std::size_t batch_size = 16;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
  AdamConfig adam;
  /// Threads used for dev-set scoring between epochs.
  std::size_t scoring_workers = 1;
};

class TrainingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mean cross-entropy over a batch; gradients are written to `grads` (one
/// tensor per model parameter, zeros for untrained ones).
double batch_loss_and_grads(Model &model, const Batch &batch, std::vector<Tensor> &grads);

/// One pass over `batches` at lr_at(state.epoch) honouring frozen_at.
/// Returns the mean training loss. Throws TrainingError naming the batch when
/// a loss is not finite.
double train_epoch(Model &model, TrainState &state, const Schedule &schedule,
                   std::span<const Batch> batches, const TrainOptions &options);

struct EpochLog {
  int epoch;
  double lr;
  bool encoder_frozen;
  double train_loss;
  double dev_eer;
};

void write_log_csv(std::ostream &out, std::span<const EpochLog> log);

ScoreSet score_dataset(const Model &model, std::span<const LabeledStack> data,
                       std::size_t workers = 1);

struct FitResult {
  std::vector<EpochLog> log;
  Model best;
  int best_epoch = 0;
  double best_dev_eer = 1.0;
};

/// Runs schedule.total_epochs epochs, scoring `dev` after each and keeping the
/// model with the lowest dev EER (latest on ties, i.e. the most trained).
FitResult fit(Model model, std::span<const LabeledStack> train, std::span<const LabeledStack> dev,
              const Schedule &schedule, const TrainOptions &options, std::uint64_t seed,
              const std::function<void(const EpochLog &)> &on_epoch = {});

} // namespace attmerge
