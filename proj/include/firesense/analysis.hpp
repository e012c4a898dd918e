#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firesense/data.hpp"
#include "firesense/metrics.hpp"
#include "firesense/model.hpp"

namespace firesense {

/// Maps raw samples to per-pixel fire probabilities.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::vector<float>> predict(const Dataset& raw) = 0;
};

/// A trained network behind its preprocessing.
class ModelPredictor final : public Predictor {
 public:
  ModelPredictor(Model<float>& model, Preprocessor pre, std::string name)
      : model_(model), pre_(std::move(pre)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<std::vector<float>> predict(const Dataset& raw) override;

 private:
  Model<float>& model_;
  Preprocessor pre_;
  std::string name_;
};

/// Reference predictor that outputs the raw PrevFireMask channel.
class CopyPrevPredictor final : public Predictor {
 public:
  std::string name() const override { return "dummy-copy-prev"; }
  std::vector<std::vector<float>> predict(const Dataset& raw) override;
};

/// Pools predictions with the raw PrevFireMask and labels of every sample.
PooledPredictions pool(const Dataset& raw, const std::vector<std::vector<float>>& probs);

// ---------------------------------------------------------------------------
// Channel-masking importance

struct ImportanceRow {
  std::size_t channel = 0;
  std::string name;
  ChannelGroup group = ChannelGroup::Fuel;
  double baseline_f1 = 0.0;
  double masked_f1 = 0.0;
  double delta_f1 = 0.0;
};

struct ImportanceReport {
  double threshold = 0.5;
  double baseline_f1 = 0.0;
  std::vector<ImportanceRow> rows;
};

/// Clean-protocol F1 at `threshold` with the listed channels replaced (after
/// preprocessing) by their training-split global mean.
double masked_f1(Model<float>& model, const Preprocessor& pre, const Dataset& test_raw,
                 std::span<const std::size_t> channels, double threshold);

/// One row per channel. Without an explicit threshold the baseline's best
/// Clean threshold from the sweep is used and then held fixed for every mask.
ImportanceReport channel_importance(Model<float>& model, const Preprocessor& pre, const Dataset& test_raw,
                                    std::optional<double> threshold = std::nullopt);

void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& report);

// ---------------------------------------------------------------------------
// MC Dropout

struct UncertaintyMap {
  int height = 0;
  int width = 0;
  int n_passes = 0;
  std::vector<float> mean;
  std::vector<float> std;

  friend bool operator==(const UncertaintyMap&, const UncertaintyMap&) = default;
};

inline constexpr int kDefaultMcPasses = 20;

/// `x` is one preprocessed sample [12, H, W]. Each pass keeps batchnorm in
/// inference mode with dropout active and draws its mask from derive_seed(seed, pass).
/// Throws ConfigError for n_passes < 2.
UncertaintyMap mc_predict(Model<float>& model, const Tensor<float>& x, int n_passes = kDefaultMcPasses,
                          std::uint64_t seed = 0, std::vector<std::vector<float>>* passes = nullptr);

// ---------------------------------------------------------------------------
// Attention export

/// The three alpha maps (full, 1/2, 1/4 resolution) of an eval-mode forward.
/// Throws ConfigError for architectures without CAFIM.
std::vector<Tensor<float>> export_attention(Model<float>& model, const Tensor<float>& x);

}  // namespace firesense
