#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace firesense {

enum class Protocol { Clean, Inflated };

std::string to_string(Protocol p);
/// "clean" or "inflated"; throws ConfigError otherwise.
Protocol parse_protocol(const std::string& s);

/// Per-pixel target under a protocol: 1 fire, 0 background, -1 excluded.
/// Clean keeps the raster as given. Inflated marks fire wherever the previous
/// mask (>= 0.5) or the next-day mask is on, and relabels -1 as 0.
std::vector<std::int8_t> effective_target(std::span<const float> prev_mask, std::span<const std::int8_t> target,
                                          Protocol protocol);

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t included() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero-denominator cases yield 0.
Prf1 prf1(const Confusion& c);

/// Counts over pixels whose effective target is not -1; prediction = prob >= threshold.
Confusion confusion(std::span<const float> probs, std::span<const float> prev_mask,
                    std::span<const std::int8_t> target, Protocol protocol, double threshold);

/// Same on an already-resolved target (1/0, -1 excluded).
Confusion confusion(std::span<const float> probs, std::span<const std::int8_t> effective, double threshold);

/// Returned by auc_pr when no positive pixel is included.
inline constexpr double kUndefinedAp = -1.0;

struct ApResult {
  double value = kUndefinedAp;
  bool defined = false;
  std::int64_t positives = 0;
};

/// Average precision: mean over positives (ranked by descending score, ties in
/// pixel order) of the precision at that rank. Pixels with label -1 are skipped.
ApResult auc_pr(std::span<const float> probs, std::span<const std::int8_t> labels);

/// 0.05, 0.10, ..., 0.95.
std::vector<double> sweep_thresholds();

struct SweepRow {
  double threshold = 0.0;
  Confusion counts;
  Prf1 metrics;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;  // index of the highest F1, lowest threshold on ties

  const SweepRow& best_row() const { return rows.at(best); }
};

SweepResult threshold_sweep(std::span<const float> probs, std::span<const float> prev_mask,
                            std::span<const std::int8_t> target, Protocol protocol);

/// Pixels of a whole split, concatenated sample by sample (micro pooling).
struct PooledPredictions {
  std::vector<float> probs;
  std::vector<float> prev_mask;
  std::vector<std::int8_t> target;

  void append(std::span<const float> p, std::span<const float> prev, std::span<const std::int8_t> y);
  std::size_t size() const { return probs.size(); }
};

struct MetricsReport {
  std::string model;
  Protocol protocol = Protocol::Clean;
  double threshold = 0.5;
  Confusion counts;
  Prf1 metrics;
  ApResult auc_pr;
};

/// Sweeps thresholds, then reports the counts at the best one plus AP.
MetricsReport evaluate(const std::string& model, const PooledPredictions& pred, Protocol protocol,
                       SweepResult* sweep = nullptr);

/// Counts and AP at a fixed threshold (no sweep).
MetricsReport evaluate_at(const std::string& model, const PooledPredictions& pred, Protocol protocol,
                          double threshold);

struct AuditRow {
  std::string model;
  MetricsReport clean;
  MetricsReport inflated;
  bool inflation_defined = false;
  double inflation_pct = 0.0;
};

/// Each protocol gets its own best threshold; inflation % = (inflated - clean) / clean * 100,
/// undefined when clean F1 is 0.
AuditRow inflation_audit(const std::string& model, const PooledPredictions& pred);

// CSV outputs (header row always present).
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
void write_sweep_csv(const std::filesystem::path& path, const std::string& model, Protocol protocol,
                     const SweepResult& sweep);
void write_audit_csv(const std::filesystem::path& path, const std::vector<AuditRow>& rows);

/// Number formatting shared by every CSV writer (shortest round-trip form).
std::string format_number(double v);

}  // namespace firesense
