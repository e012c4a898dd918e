#include "firesense/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "firesense/error.hpp"
#include "firesense/train.hpp"

namespace firesense {

std::vector<std::vector<float>> ModelPredictor::predict(const Dataset& raw) {
  return predict_probs(model_, pre_.apply(raw));
}

std::vector<std::vector<float>> CopyPrevPredictor::predict(const Dataset& raw) {
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto ch = raw.channel(i, ChannelSchema::kPrevFireMask);
    std::vector<float> p(ch.begin(), ch.end());
    for (auto& v : p) v = std::clamp(v, 0.0f, 1.0f);
    out.push_back(std::move(p));
  }
  return out;
}

PooledPredictions pool(const Dataset& raw, const std::vector<std::vector<float>>& probs) {
  if (probs.size() != raw.size()) throw DimensionError("pool: prediction count differs from sample count");
  PooledPredictions out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.append(probs[i], raw.channel(i, ChannelSchema::kPrevFireMask), raw.samples[i].y);
  }
  return out;
}

double masked_f1(Model<float>& model, const Preprocessor& pre, const Dataset& test_raw,
                 std::span<const std::size_t> channels, double threshold) {
  Dataset x = pre.apply(test_raw);
  for (auto c : channels) {
    if (c >= x.channels()) throw ConfigError("channel index " + std::to_string(c) + " out of range");
    const auto fill = static_cast<float>(normalized_mean(c, pre.stats));
    for (std::size_t i = 0; i < x.size(); ++i) std::ranges::fill(x.channel(i, c), fill);
  }
  const auto probs = predict_probs(model, x);
  Confusion cm;
  for (std::size_t i = 0; i < probs.size(); ++i) cm += confusion(probs[i], test_raw.samples[i].y, threshold);
  return prf1(cm).f1;
}

ImportanceReport channel_importance(Model<float>& model, const Preprocessor& pre, const Dataset& test_raw,
                                    std::optional<double> threshold) {
  ImportanceReport rep;
  if (threshold) {
    rep.threshold = *threshold;
  } else {
    ModelPredictor p(model, pre, "model");
    rep.threshold = evaluate("model", pool(test_raw, p.predict(test_raw)), Protocol::Clean).threshold;
  }
  rep.baseline_f1 = masked_f1(model, pre, test_raw, {}, rep.threshold);
  for (std::size_t c = 0; c < test_raw.channels(); ++c) {
    ImportanceRow row;
    row.channel = c;
    row.name = test_raw.channel_names[c];
    row.group = ChannelSchema::group(c);
    row.baseline_f1 = rep.baseline_f1;
    const std::size_t one[] = {c};
    row.masked_f1 = masked_f1(model, pre, test_raw, one, rep.threshold);
    row.delta_f1 = row.masked_f1 - row.baseline_f1;
    rep.rows.push_back(row);
  }
  return rep;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& report) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out << "channel,name,group,threshold,baseline_f1,masked_f1,delta_f1\n";
  for (const auto& r : report.rows) {
    out << r.channel << ',' << r.name << ',' << to_string(r.group) << ',' << format_number(report.threshold) << ','
        << format_number(r.baseline_f1) << ',' << format_number(r.masked_f1) << ',' << format_number(r.delta_f1)
        << '\n';
  }
}

UncertaintyMap mc_predict(Model<float>& model, const Tensor<float>& x, int n_passes, std::uint64_t seed,
                          std::vector<std::vector<float>>* passes) {
  if (n_passes < 2) throw ConfigError("mc_predict needs at least 2 passes for a standard deviation");
  if (x.rank() != 3) throw DimensionError("mc_predict expects one [C, H, W] sample, got " + to_string(x.shape()));
  NoGradGuard guard;
  UncertaintyMap u;
  u.height = static_cast<int>(x.dim(1));
  u.width = static_cast<int>(x.dim(2));
  u.n_passes = n_passes;
  const std::size_t px = static_cast<std::size_t>(u.height) * static_cast<std::size_t>(u.width);
  std::vector<std::vector<float>> all;
  for (int k = 0; k < n_passes; ++k) {
    Pcg32 rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 4);
    const auto fwd = model.forward(x, ForwardMode::mc_dropout(&rng));
    const auto z = fwd.logits.values();
    std::vector<float> p(px);
    for (std::size_t i = 0; i < px; ++i) {
      const double v = z[i];
      p[i] = static_cast<float>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
    }
    all.push_back(std::move(p));
  }
  u.mean.resize(px);
  u.std.resize(px);
  for (std::size_t i = 0; i < px; ++i) {
    double s = 0.0;
    for (const auto& p : all) s += p[i];
    const double m = s / n_passes;
    double ss = 0.0;
    for (const auto& p : all) ss += (p[i] - m) * (p[i] - m);
    u.mean[i] = static_cast<float>(m);
    u.std[i] = static_cast<float>(std::sqrt(ss / n_passes));
  }
  if (passes) *passes = std::move(all);
  return u;
}

std::vector<Tensor<float>> export_attention(Model<float>& model, const Tensor<float>& x) {
  if (model.config().arch != Arch::FireSenseNet) {
    throw ConfigError("attention export needs a CAFIM model, got " + to_string(model.config().arch));
  }
  NoGradGuard guard;
  return model.forward(x, ForwardMode::eval()).alphas;
}

}  // namespace firesense
