#include "firesense/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "firesense/error.hpp"

namespace firesense {

std::string to_string(Protocol p) { return p == Protocol::Clean ? "clean" : "inflated"; }

Protocol parse_protocol(const std::string& s) {
  if (s == "clean") return Protocol::Clean;
  if (s == "inflated") return Protocol::Inflated;
  throw ConfigError("unknown protocol '" + s + "' (expected clean|inflated)");
}

std::vector<std::int8_t> effective_target(std::span<const float> prev_mask, std::span<const std::int8_t> target,
                                          Protocol protocol) {
  if (protocol == Protocol::Clean) return {target.begin(), target.end()};
  if (prev_mask.size() != target.size()) {
    throw DimensionError("effective_target: prev mask has " + std::to_string(prev_mask.size()) +
                         " pixels, target " + std::to_string(target.size()));
  }
  std::vector<std::int8_t> out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) out[i] = (prev_mask[i] >= 0.5f || target[i] == 1) ? 1 : 0;
  return out;
}

Prf1 prf1(const Confusion& c) {
  Prf1 m;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision + m.recall > 0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

Confusion confusion(std::span<const float> probs, std::span<const std::int8_t> effective, double threshold) {
  if (probs.size() != effective.size()) {
    throw DimensionError("confusion: " + std::to_string(probs.size()) + " predictions vs " +
                         std::to_string(effective.size()) + " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto t = effective[i];
    if (t < 0) continue;
    const bool pred = static_cast<double>(probs[i]) >= threshold;
    if (pred) {
      (t == 1 ? c.tp : c.fp) += 1;
    } else {
      (t == 1 ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

Confusion confusion(std::span<const float> probs, std::span<const float> prev_mask,
                    std::span<const std::int8_t> target, Protocol protocol, double threshold) {
  const auto eff = effective_target(prev_mask, target, protocol);
  return confusion(probs, eff, threshold);
}

ApResult auc_pr(std::span<const float> probs, std::span<const std::int8_t> labels) {
  if (probs.size() != labels.size()) throw DimensionError("auc_pr: predictions and labels differ in length");
  std::vector<std::size_t> order;
  order.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] >= 0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  ApResult r;
  double acc = 0.0;
  std::int64_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != 1) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  r.positives = hits;
  if (hits > 0) {
    r.defined = true;
    r.value = acc / static_cast<double>(hits);
  }
  return r;
}

std::vector<double> sweep_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 19; ++i) t.push_back(i / 20.0);
  return t;
}

namespace {

SweepResult sweep_resolved(std::span<const float> probs, std::span<const std::int8_t> eff) {
  SweepResult r;
  for (double th : sweep_thresholds()) {
    SweepRow row;
    row.threshold = th;
    row.counts = confusion(probs, eff, th);
    row.metrics = prf1(row.counts);
    r.rows.push_back(row);
  }
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    if (r.rows[i].metrics.f1 > r.rows[r.best].metrics.f1) r.best = i;
  }
  return r;
}

}  // namespace

SweepResult threshold_sweep(std::span<const float> probs, std::span<const float> prev_mask,
                            std::span<const std::int8_t> target, Protocol protocol) {
  const auto eff = effective_target(prev_mask, target, protocol);
  return sweep_resolved(probs, eff);
}

void PooledPredictions::append(std::span<const float> p, std::span<const float> prev,
                               std::span<const std::int8_t> y) {
  if (p.size() != y.size() || prev.size() != y.size()) throw DimensionError("PooledPredictions: raster sizes differ");
  probs.insert(probs.end(), p.begin(), p.end());
  prev_mask.insert(prev_mask.end(), prev.begin(), prev.end());
  target.insert(target.end(), y.begin(), y.end());
}

MetricsReport evaluate(const std::string& model, const PooledPredictions& pred, Protocol protocol,
                       SweepResult* sweep) {
  const auto eff = effective_target(pred.prev_mask, pred.target, protocol);
  SweepResult s = sweep_resolved(pred.probs, eff);
  MetricsReport r;
  r.model = model;
  r.protocol = protocol;
  r.threshold = s.best_row().threshold;
  r.counts = s.best_row().counts;
  r.metrics = s.best_row().metrics;
  r.auc_pr = auc_pr(pred.probs, eff);
  if (sweep) *sweep = std::move(s);
  return r;
}

MetricsReport evaluate_at(const std::string& model, const PooledPredictions& pred, Protocol protocol,
                          double threshold) {
  const auto eff = effective_target(pred.prev_mask, pred.target, protocol);
  MetricsReport r;
  r.model = model;
  r.protocol = protocol;
  r.threshold = threshold;
  r.counts = confusion(pred.probs, eff, threshold);
  r.metrics = prf1(r.counts);
  r.auc_pr = auc_pr(pred.probs, eff);
  return r;
}

AuditRow inflation_audit(const std::string& model, const PooledPredictions& pred) {
  AuditRow row;
  row.model = model;
  row.clean = evaluate(model, pred, Protocol::Clean);
  row.inflated = evaluate(model, pred, Protocol::Inflated);
  const double c = row.clean.metrics.f1;
  if (c > 0) {
    row.inflation_defined = true;
    row.inflation_pct = (row.inflated.metrics.f1 - c) / c * 100.0;
  }
  return row;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  return out;
}

std::string ap_cell(const ApResult& ap) { return ap.defined ? format_number(ap.value) : "undefined"; }

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  auto out = open_csv(path);
  out << "model,protocol,threshold,tp,fp,fn,tn,precision,recall,f1,auc_pr\n";
  for (const auto& r : reports) {
    out << r.model << ',' << to_string(r.protocol) << ',' << format_number(r.threshold) << ',' << r.counts.tp << ','
        << r.counts.fp << ',' << r.counts.fn << ',' << r.counts.tn << ',' << format_number(r.metrics.precision) << ','
        << format_number(r.metrics.recall) << ',' << format_number(r.metrics.f1) << ',' << ap_cell(r.auc_pr) << '\n';
  }
}

void write_sweep_csv(const std::filesystem::path& path, const std::string& model, Protocol protocol,
                     const SweepResult& sweep) {
  auto out = open_csv(path);
  out << "model,protocol,threshold,tp,fp,fn,tn,precision,recall,f1,best\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& r = sweep.rows[i];
    out << model << ',' << to_string(protocol) << ',' << format_number(r.threshold) << ',' << r.counts.tp << ','
        << r.counts.fp << ',' << r.counts.fn << ',' << r.counts.tn << ',' << format_number(r.metrics.precision)
        << ',' << format_number(r.metrics.recall) << ',' << format_number(r.metrics.f1) << ','
        << (i == sweep.best ? 1 : 0) << '\n';
  }
}

void write_audit_csv(const std::filesystem::path& path, const std::vector<AuditRow>& rows) {
  auto out = open_csv(path);
  out << "model,clean_threshold,clean_f1,inflated_threshold,inflated_f1,inflation_pct\n";
  for (const auto& r : rows) {
    out << r.model << ',' << format_number(r.clean.threshold) << ',' << format_number(r.clean.metrics.f1) << ','
        << format_number(r.inflated.threshold) << ',' << format_number(r.inflated.metrics.f1) << ','
        << (r.inflation_defined ? format_number(r.inflation_pct) : "undefined") << '\n';
  }
}

}  // namespace firesense
