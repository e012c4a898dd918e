#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "firesense/data.hpp"
#include "firesense/losses.hpp"
#include "firesense/model.hpp"
#include "firesense/optim.hpp"

namespace firesense {

struct TrainConfig {
  double lr = 3e-4;
  int batch_size = 128;
  int max_epochs = 100;
  int patience = 15;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double eta_min = 1e-6;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Overrides the dropout stream seed (otherwise derived from `seed`).
  std::optional<std::uint64_t> dropout_seed;
  bool augment = true;
  bool soft_labels = true;
  /// Stop as soon as validation F1 reaches this value (<= 0 disables).
  double target_f1 = 0.0;
  LossOptions loss;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double wbce = 0.0;
  double dice = 0.0;
  double focal = 0.0;
  double val_f1 = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  int next_epoch = 0;
  AdamState adam;
  double best_f1 = -1.0;
  int best_epoch = -1;
  int since_best = 0;
  int epochs_to_target = -1;  // 1-based epoch count at which target_f1 was reached
  bool finished = false;
  Pcg32::State data_rng;
  Pcg32::State aug_rng;
  Pcg32::State dropout_rng;
  std::vector<EpochRecord> history;
  std::vector<std::vector<float>> best_params;
  std::vector<std::vector<float>> best_buffers;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Fresh state: the three streams are seeded from independent derived seeds.
TrainState initial_train_state(const TrainConfig& cfg);

struct FitOptions {
  /// Run at most this many epochs in this call (the state records where to resume); < 0 runs to the end.
  int epochs_this_call = -1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_f1 = 0.0;
  int epochs_to_target = -1;
  bool stopped_early = false;
  bool finished = false;
};

/// Trains on preprocessed copies of the raw splits. Each epoch: seeded shuffle,
/// batches, flip augmentation, soft labels, composite loss, backward, clipping,
/// Adam step at the epoch's cosine learning rate, then validation F1 (Clean
/// protocol, threshold 0.5). When training ends the best-F1 parameters are
/// restored into the model. Throws NumericalError on a non-finite loss.
FitResult fit(Model<float>& model, const Preprocessor& pre, const Dataset& train, const Dataset& val,
              const TrainConfig& cfg, TrainState& state, const FitOptions& opts = {});

/// Convenience overload starting from initial_train_state(cfg).
FitResult fit(Model<float>& model, const Preprocessor& pre, const Dataset& train, const Dataset& val,
              const TrainConfig& cfg, const FitOptions& opts = {});

/// Stacks samples `idx` of an already preprocessed dataset into [B, 12, H, W].
Tensor<float> make_batch(const Dataset& preprocessed, std::span<const std::size_t> idx);

/// Sigmoid probabilities for every sample of a preprocessed dataset (eval mode), batch by batch.
std::vector<std::vector<float>> predict_probs(Model<float>& model, const Dataset& preprocessed,
                                              std::size_t batch = 8);

/// Clean-protocol F1 at threshold 0.5 against the raw labels.
double validation_f1(Model<float>& model, const Dataset& preprocessed);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace firesense
