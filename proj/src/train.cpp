#include "firesense/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "firesense/error.hpp"
#include "firesense/metrics.hpp"

namespace firesense {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigError("patience must lie in [1, max_epochs]");
  if (eta_min < 0 || eta_min > lr) throw ConfigError("eta_min must lie in [0, lr]");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (target_f1 > 1) throw ConfigError("target_f1 must be <= 1");
}

TrainState initial_train_state(const TrainConfig& cfg) {
  TrainState s;
  s.data_rng = Pcg32(derive_seed(cfg.seed, 1), 1).state();
  s.aug_rng = Pcg32(derive_seed(cfg.seed, 2), 2).state();
  s.dropout_rng = Pcg32(cfg.dropout_seed ? *cfg.dropout_seed : derive_seed(cfg.seed, 3), 3).state();
  return s;
}

Tensor<float> make_batch(const Dataset& preprocessed, std::span<const std::size_t> idx) {
  const std::size_t per = preprocessed.channels() * preprocessed.pixels();
  std::vector<float> x;
  x.reserve(per * idx.size());
  for (auto i : idx) {
    const auto& s = preprocessed.samples.at(i);
    x.insert(x.end(), s.x.begin(), s.x.end());
  }
  return Tensor<float>(Shape{static_cast<std::int64_t>(idx.size()), static_cast<std::int64_t>(preprocessed.channels()),
                             preprocessed.height, preprocessed.width},
                       std::move(x));
}

namespace {

float sigmoid_f(float z) {
  const double v = z;
  return static_cast<float>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
}

std::vector<std::vector<float>> snapshot_params(Model<float>& model) {
  std::vector<std::vector<float>> out;
  model.for_each_parameter(
      [&](const std::string&, Tensor<float>& t) { out.emplace_back(t.values().begin(), t.values().end()); });
  return out;
}

std::vector<std::vector<float>> snapshot_buffers(Model<float>& model) {
  std::vector<std::vector<float>> out;
  model.for_each_buffer([&](const std::string&, std::vector<float>& b) { out.push_back(b); });
  return out;
}

void restore_snapshot(Model<float>& model, const std::vector<std::vector<float>>& params,
                      const std::vector<std::vector<float>>& buffers) {
  std::size_t k = 0;
  model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    if (k >= params.size() || params[k].size() != static_cast<std::size_t>(t.numel())) {
      throw ConfigError("snapshot does not match parameter '" + name + "'");
    }
    std::copy(params[k].begin(), params[k].end(), t.mutable_values().begin());
    ++k;
  });
  k = 0;
  model.for_each_buffer([&](const std::string& name, std::vector<float>& b) {
    if (k >= buffers.size() || buffers[k].size() != b.size()) {
      throw ConfigError("snapshot does not match buffer '" + name + "'");
    }
    b = buffers[k++];
  });
}

}  // namespace

std::vector<std::vector<float>> predict_probs(Model<float>& model, const Dataset& preprocessed, std::size_t batch) {
  NoGradGuard guard;
  std::vector<std::vector<float>> out;
  out.reserve(preprocessed.size());
  batch = std::max<std::size_t>(batch, 1);
  for (std::size_t start = 0; start < preprocessed.size(); start += batch) {
    const std::size_t end = std::min(preprocessed.size(), start + batch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto fwd = model.forward(make_batch(preprocessed, idx), ForwardMode::eval());
    const auto z = fwd.logits.values();
    const std::size_t px = preprocessed.pixels();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::vector<float> p(px);
      for (std::size_t i = 0; i < px; ++i) p[i] = sigmoid_f(z[b * px + i]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

double validation_f1(Model<float>& model, const Dataset& preprocessed) {
  const auto probs = predict_probs(model, preprocessed);
  Confusion c;
  for (std::size_t i = 0; i < probs.size(); ++i) c += confusion(probs[i], preprocessed.samples[i].y, 0.5);
  return prf1(c).f1;
}

FitResult fit(Model<float>& model, const Preprocessor& pre, const Dataset& train, const Dataset& val,
              const TrainConfig& cfg, TrainState& state, const FitOptions& opts) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("training split is empty");
  const Dataset tr = pre.apply(train);
  const Dataset va = pre.apply(val);
  const int H = tr.height, W = tr.width;

  auto params = model.named_parameters();
  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  adam.set_state(state.adam);
  Pcg32 data_rng, aug_rng, drop_rng;
  data_rng.set_state(state.data_rng);
  aug_rng.set_state(state.aug_rng);
  drop_rng.set_state(state.dropout_rng);

  int ran = 0;
  while (!state.finished && state.next_epoch < cfg.max_epochs &&
         (opts.epochs_this_call < 0 || ran < opts.epochs_this_call)) {
    const int epoch = state.next_epoch;
    const double lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr, cfg.eta_min);
    adam.set_lr(lr);

    std::vector<std::size_t> order(tr.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[data_rng.below(static_cast<std::uint32_t>(i + 1))]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0, batch_no = 0; start < order.size(); start += bs, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<float> x;
      std::vector<float> targets;
      std::vector<std::uint8_t> mask;
      for (std::size_t k = start; k < end; ++k) {
        Sample s = tr.samples[order[k]];
        if (cfg.augment) augment_flip(s, H, W, aug_rng);
        const auto t = cfg.soft_labels ? soft_labels(s.y, aug_rng) : hard_labels(s.y);
        const auto m = valid_mask(std::span<const std::int8_t>(s.y));
        x.insert(x.end(), s.x.begin(), s.x.end());
        targets.insert(targets.end(), t.begin(), t.end());
        mask.insert(mask.end(), m.begin(), m.end());
      }
      const auto n = static_cast<std::int64_t>(end - start);
      Tensor<float> xb(Shape{n, static_cast<std::int64_t>(tr.channels()), H, W}, std::move(x));

      model.zero_grad();
      try {
        const auto fwd = model.forward(xb, ForwardMode::train(&drop_rng));
        const auto loss = composite_loss(fwd.logits, std::span<const float>(targets), mask, cfg.loss);
        loss.total.backward();
        if (cfg.clip_norm > 0) clip_gradients(params, cfg.clip_norm);
        adam.step(params);
        const double w = static_cast<double>(n) / static_cast<double>(tr.size());
        rec.loss += loss.total.item() * w;
        rec.wbce += loss.wbce.item() * w;
        rec.dice += loss.dice.item() * w;
        rec.focal += loss.focal.item() * w;
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no) + ": " +
                             e.what());
      }
    }

    rec.val_f1 = validation_f1(model, va);
    state.history.push_back(rec);
    if (rec.val_f1 > state.best_f1) {
      state.best_f1 = rec.val_f1;
      state.best_epoch = epoch;
      state.since_best = 0;
      state.best_params = snapshot_params(model);
      state.best_buffers = snapshot_buffers(model);
    } else {
      ++state.since_best;
    }
    if (cfg.target_f1 > 0 && rec.val_f1 >= cfg.target_f1 && state.epochs_to_target < 0) {
      state.epochs_to_target = epoch + 1;
      state.finished = true;
    }
    if (state.since_best >= cfg.patience) state.finished = true;
    state.next_epoch = epoch + 1;
    if (state.next_epoch >= cfg.max_epochs) state.finished = true;

    state.adam = adam.state();
    state.data_rng = data_rng.state();
    state.aug_rng = aug_rng.state();
    state.dropout_rng = drop_rng.state();
    ++ran;
    if (opts.on_epoch) opts.on_epoch(rec);
  }

  if (state.finished && !state.best_params.empty()) restore_snapshot(model, state.best_params, state.best_buffers);

  FitResult r;
  r.history = state.history;
  r.best_epoch = state.best_epoch;
  r.best_f1 = state.best_f1;
  r.epochs_to_target = state.epochs_to_target;
  r.finished = state.finished;
  r.stopped_early = state.finished && state.since_best >= cfg.patience;
  return r;
}

FitResult fit(Model<float>& model, const Preprocessor& pre, const Dataset& train, const Dataset& val,
              const TrainConfig& cfg, const FitOptions& opts) {
  TrainState state = initial_train_state(cfg);
  return fit(model, pre, train, val, cfg, state, opts);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out << "epoch,lr,loss,wbce,dice,focal,val_f1\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_number(r.lr) << ',' << format_number(r.loss) << ',' << format_number(r.wbce) << ','
        << format_number(r.dice) << ',' << format_number(r.focal) << ',' << format_number(r.val_f1) << '\n';
  }
}

}  // namespace firesense
