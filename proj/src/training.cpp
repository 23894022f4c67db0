#include "spoof/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "spoof/fsutil.hpp"

namespace spoof {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void HyperParams::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (!(split_ratio > 0 && split_ratio < 1))
    throw std::invalid_argument("split_ratio must lie in (0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
  if (!(dropout_rate >= 0 && dropout_rate < 1))
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(min_delta >= 0)) throw std::invalid_argument("min_delta must be non-negative");
}

std::string format_history(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_accuracy,seconds\n";
  for (const auto& e : history.epochs)
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
       << format_double(e.val_accuracy) << ',' << format_double(e.seconds) << '\n';
  os << "# {\"stopped_epoch\": " << history.stopped_epoch
     << ", \"best_epoch\": " << history.best_epoch << "}\n";
  return os.str();
}

// ---- split ----------------------------------------------------------------

Split stratified_split(std::span<const SampleRecord> records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0 && ratio < 1)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<bool> to_train(records.size(), false);
  for (Label label : {Label::Live, Label::Printed, Label::Contact}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].label == label) idx.push_back(i);
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw std::invalid_argument("stratified_split: label '" + std::string(to_string(label)) +
                                  "' has fewer than 2 records");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size()) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_train; ++k) to_train[idx[k]] = true;
  }
  Split s;
  for (std::size_t i = 0; i < records.size(); ++i)
    (to_train[i] ? s.train : s.val).push_back(records[i]);
  return s;
}

// ---- optimizer ------------------------------------------------------------

template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
              double learning_rate, double momentum, double weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw ShapeError("sgd_step: parameter, gradient and velocity lengths differ");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]) + weight_decay * static_cast<double>(param[i]);
    const double v = momentum * static_cast<double>(velocity[i]) - learning_rate * g;
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(static_cast<double>(param[i]) + v);
  }
}

template <typename T>
void SgdMomentum<T>::step(const std::vector<ParamRef<T>>& params) {
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.value->size(), T{0});
  }
  if (velocity_.size() != params.size())
    throw ShapeError("SgdMomentum: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad->size() != p.value->size()) throw ShapeError("SgdMomentum: gradient missing for " + p.name);
    sgd_step<T>(p.value->data(), std::as_const(*p.grad).data(), velocity_[i], lr_, momentum_,
                p.decay ? decay_ : 0.0);
  }
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  if (epoch_ == 1 || val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

// ---- data -----------------------------------------------------------------

Tensor<float> StageData::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("StageData::gather: empty batch");
  const Shape& one = images.at(indices[0]).shape();
  Tensor<float> batch({indices.size(), one[1], one[2], one[3]});
  const std::size_t block = images[indices[0]].size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = images.at(indices[b]);
    if (img.shape() != one) throw ShapeError("StageData::gather: mixed image shapes");
    std::copy(img.data().begin(), img.data().end(), batch.raw() + b * block);
  }
  return batch;
}

void StageData::push(Tensor<float> image, float label, std::string path) {
  images.push_back(std::move(image));
  labels.push_back(label);
  paths.push_back(std::move(path));
}

std::optional<float> stage_target(Stage stage, Label label) noexcept {
  if (stage == Stage::One) return label == Label::Printed ? 0.0f : 1.0f;
  switch (label) {
    case Label::Live: return 1.0f;
    case Label::Contact: return 0.0f;
    case Label::Printed: return std::nullopt;
  }
  return std::nullopt;
}

PreparedSample prepare_sample(const Manifest& manifest, const SampleRecord& record,
                              std::size_t input_size) {
  const auto image = load_gray_image(manifest.resolve(record));
  return {crop_resize(image, std::nullopt, input_size), crop_resize(image, record.bbox, input_size)};
}

InputStatistics input_statistics(const StageData& data) {
  if (data.size() == 0) throw std::invalid_argument("input_statistics: empty set");
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& img : data.images) {
    for (float v : img.data()) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    n += img.size();
  }
  InputStatistics st;
  st.mean = sum / static_cast<double>(n);
  st.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - st.mean * st.mean));
  return st;
}

StageData build_stage_data(const Manifest& manifest, std::span<const SampleRecord> records,
                           Stage stage, std::size_t input_size) {
  StageData data;
  for (const auto& r : records) {
    const auto target = stage_target(stage, r.label);
    if (!target) continue;
    auto prepared = prepare_sample(manifest, r, input_size);
    data.push(stage == Stage::One ? std::move(prepared.full) : std::move(prepared.crop), *target,
              r.image_path);
  }
  return data;
}

StageMetrics evaluate_stage(const SpoofNet<float>& net, const StageData& data,
                            std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_stage: empty data set");
  double loss_sum = 0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto logits = net.infer(data.gather(idx));
    const std::span<const float> labels(data.labels.data() + start, end - start);
    loss_sum += static_cast<double>(bce_with_logits(logits, labels).loss) * (end - start);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool predicted = sigmoid(logits[i]) >= 0.5f;
      if (predicted == (labels[i] == 1.0f)) ++correct;
    }
  }
  return {loss_sum / data.size(), static_cast<double>(correct) / data.size()};
}

// ---- training loops -------------------------------------------------------

TrainHistory train_stage(SpoofNet<float>& net, const StageData& train, const StageData& val,
                         const HyperParams& hp, const StageOptions& options) {
  hp.validate();
  if (train.size() == 0) throw std::invalid_argument("train_stage: empty training set");
  if (val.size() == 0) throw std::invalid_argument("train_stage: empty validation set");

  std::mt19937_64 rng(hp.seed);
  net.dropout().reseed(derive_seed(hp.seed, 7));
  SgdMomentum<float> optimizer(hp.learning_rate, hp.momentum, hp.weight_decay);
  EarlyStopping stopper(hp.patience, hp.min_delta);

  auto snapshot = [&net] {
    std::vector<Tensor<float>> copy;
    for (const auto* t : net.param_values()) copy.push_back(*t);
    return copy;
  };
  std::vector<Tensor<float>> best = snapshot();

  TrainHistory history;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::vector<float> labels;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(start + hp.batch_size, order.size());
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.clear();
      for (auto i : idx) labels.push_back(train.labels[i]);
      const auto logits = net.forward(train.gather(idx), Mode::Train);
      const auto bce = bce_with_logits<float>(logits, labels);
      net.backward(bce.d_logits);
      optimizer.step(net.params());
      loss_sum += static_cast<double>(bce.loss) * idx.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / train.size();
    const auto metrics = evaluate_stage(net, val);
    rec.val_loss = options.val_loss_override ? options.val_loss_override(epoch) : metrics.loss;
    rec.val_accuracy = metrics.accuracy;
    rec.weights_fingerprint = net.fingerprint();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(rec);
    if (stopper.update(rec.val_loss)) best = snapshot();
    if (options.on_epoch) options.on_epoch(rec);
    history.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }
  history.best_epoch = stopper.best_epoch();

  auto params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = std::move(best[i]);
  return history;
}

CascadeTraining train_cascade(const Manifest& manifest, std::span<const SampleRecord> records,
                              const HyperParams& hp, const CascadeOptions& options) {
  hp.validate();
  std::vector<SampleRecord> pool;
  for (const auto& r : records)
    if (r.subset == Subset::Train) pool.push_back(r);
  auto count = [&pool](Label l) {
    return std::count_if(pool.begin(), pool.end(), [l](const SampleRecord& r) { return r.label == l; });
  };
  for (Label l : {Label::Live, Label::Printed, Label::Contact})
    if (count(l) == 0)
      throw std::invalid_argument("train_cascade: no '" + std::string(to_string(l)) +
                                  "' samples in the training pool");

  CascadeTraining out;
  out.split = stratified_split(pool, hp.split_ratio, hp.seed);
  NetworkSpec spec = options.spec;
  spec.dropout = hp.dropout_rate;
  const std::size_t S = spec.input_size;

  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  // Every frame is decoded once and yields both stage inputs.
  std::map<std::string, PreparedSample> cache;
  for (const auto* part : {&out.split.train, &out.split.val})
    for (const auto& r : *part) cache.emplace(r.image_path, prepare_sample(manifest, r, S));
  auto stage_data = [&](const std::vector<SampleRecord>& recs, Stage stage) {
    StageData data;
    for (const auto& r : recs) {
      const auto target = stage_target(stage, r.label);
      if (!target) continue;
      const auto& prepared = cache.at(r.image_path);
      data.push(stage == Stage::One ? prepared.full : prepared.crop, *target, r.image_path);
    }
    return data;
  };
  log("loaded " + std::to_string(cache.size()) + " training frames");

  auto run_stage = [&](Stage stage, TrainHistory& history) {
    const int id = stage == Stage::One ? 1 : 2;
    const auto train = stage_data(out.split.train, stage);
    const auto val = stage_data(out.split.val, stage);
    (stage == Stage::One ? out.stage1_train_size : out.stage2_train_size) = train.size();
    HyperParams stage_hp = hp;
    stage_hp.seed = derive_seed(hp.seed, 100 + id);
    NetworkSpec stage_spec = spec;
    if (options.standardize_inputs) {
      const auto st = input_statistics(train);
      stage_spec.input_mean = st.mean;
      stage_spec.input_scale = st.stddev > 1e-6 ? 1.0 / st.stddev : 1.0;
    }
    auto net = build_spoofnet<float>(stage_spec, derive_seed(hp.seed, id));
    StageOptions opts;
    opts.on_epoch = [&](const EpochRecord& e) {
      std::ostringstream os;
      os << "stage " << id << " epoch " << e.epoch << " train_loss " << e.train_loss
         << " val_loss " << e.val_loss << " val_acc " << e.val_accuracy << " (" << e.seconds
         << " s)";
      log(os.str());
    };
    history = train_stage(net, train, val, stage_hp, opts);
    return net;
  };

  out.model.net1 = run_stage(Stage::One, out.stage1);
  out.model.net2 = run_stage(Stage::Two, out.stage2);
  out.model.gate = options.gate;
  out.model.validate();
  return out;
}

template void sgd_step(std::span<float>, std::span<const float>, std::span<float>, double, double,
                       double);
template void sgd_step(std::span<double>, std::span<const double>, std::span<double>, double,
                       double, double);
template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace spoof
