#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spoof/dataio.hpp"
#include "spoof/spoofnet.hpp"

namespace spoof {

struct HyperParams {
  std::size_t max_epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 1e-5;
  double weight_decay = 1e-4;
  std::size_t patience = 5;
  double dropout_rate = 0.2;
  double momentum = 0.9;
  double split_ratio = 0.8;
  double min_delta = 1e-6;
  std::uint64_t seed = 42;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double seconds = 0;
  std::uint64_t weights_fingerprint = 0;  // parameters at the end of this epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
};

/// CSV rows `epoch,train_loss,val_loss,val_accuracy,seconds` followed by a
/// one-line JSON footer comment carrying stopped_epoch and best_epoch.
std::string format_history(const TrainHistory& history);

struct Split {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> val;
};

/// Per label, floor(ratio * n) records go to train, chosen by a seeded
/// shuffle; both halves keep the input order.
Split stratified_split(std::span<const SampleRecord> records, double ratio, std::uint64_t seed);

/// One SGD-with-momentum update with coupled L2 decay:
///   g' = grad + decay*param;  v = momentum*v - lr*g';  param += v.
template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
              double learning_rate, double momentum, double weight_decay);

/// Applies sgd_step to every parameter of a network; biases skip decay.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum, double weight_decay)
      : lr_(learning_rate), momentum_(momentum), decay_(weight_decay) {}
  void step(const std::vector<ParamRef<T>>& params);

 private:
  double lr_, momentum_, decay_;
  std::vector<std::vector<T>> velocity_;
};

/// "Improvement" means val_loss < best - min_delta.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}
  /// Records the next epoch's loss; returns true when it is a new best.
  bool update(double val_loss);
  bool should_stop() const noexcept { return stale_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0;
};

/// Preprocessed binary-labelled inputs of one stage.
struct StageData {
  std::vector<Tensor<float>> images;  // each [1,1,S,S]
  std::vector<float> labels;          // 1 = the stage's bonafide class
  std::vector<std::string> paths;

  std::size_t size() const noexcept { return images.size(); }
  Tensor<float> gather(std::span<const std::size_t> indices) const;
  void push(Tensor<float> image, float label, std::string path);
};

/// Pixel mean and standard deviation over every image in the set.
struct InputStatistics {
  double mean = 0.0;
  double stddev = 1.0;
};
InputStatistics input_statistics(const StageData& data);

enum class Stage { One, Two };

/// Stage one: printed -> 0, live/contact -> 1. Stage two: live -> 1,
/// contact -> 0, printed excluded.
std::optional<float> stage_target(Stage stage, Label label) noexcept;

/// Both network inputs of one frame: the resized full frame and the resized
/// iris crop.
struct PreparedSample {
  Tensor<float> full;
  Tensor<float> crop;
};

PreparedSample prepare_sample(const Manifest& manifest, const SampleRecord& record,
                              std::size_t input_size);

StageData build_stage_data(const Manifest& manifest, std::span<const SampleRecord> records,
                           Stage stage, std::size_t input_size);

struct StageMetrics {
  double loss = 0;
  double accuracy = 0;
};

/// Mean BCE and accuracy (p >= 0.5 counts as class 1) in inference mode.
StageMetrics evaluate_stage(const SpoofNet<float>& net, const StageData& data,
                            std::size_t batch_size = 32);

struct StageOptions {
  /// Replaces the measured validation loss of an epoch (1-based).
  std::function<double(std::size_t epoch)> val_loss_override;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch training with early stopping; `net` ends holding the
/// parameters of the best validation epoch.
TrainHistory train_stage(SpoofNet<float>& net, const StageData& train, const StageData& val,
                         const HyperParams& hp, const StageOptions& options = {});

struct CascadeTraining {
  CascadeModel model;
  TrainHistory stage1;
  TrainHistory stage2;
  Split split;
  std::size_t stage1_train_size = 0;
  std::size_t stage2_train_size = 0;
};

struct CascadeOptions {
  NetworkSpec spec{};
  double gate = 0.5;
  /// Each stage's network standardizes its inputs with the statistics of
  /// its training half.
  bool standardize_inputs = true;
  /// Progress lines ("stage 1 epoch 3 ...").
  std::function<void(const std::string&)> log;
};

/// Trains both stages on the train-subset records of `records`. The split is
/// computed once over all three labels; stage two sees only live and contact
/// samples, cropped to their iris boxes.
CascadeTraining train_cascade(const Manifest& manifest, std::span<const SampleRecord> records,
                              const HyperParams& hp, const CascadeOptions& options = {});

extern template void sgd_step(std::span<float>, std::span<const float>, std::span<float>, double,
                              double, double);
extern template void sgd_step(std::span<double>, std::span<const double>, std::span<double>,
                              double, double, double);
extern template class SgdMomentum<float>;
extern template class SgdMomentum<double>;

}  // namespace spoof
