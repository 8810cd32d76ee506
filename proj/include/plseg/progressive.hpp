#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "plseg/crf.hpp"
#include "plseg/loss.hpp"
#include "plseg/siba_net.hpp"
#include "plseg/volume.hpp"

namespace plseg {

/// A lesion prepared for training or inference: normalized ROI stack over its
/// axial range plus the crop-frame RECIST label.
struct LesionCase {
  std::string id;
  RoiCrop roi;
  AxialRange range;
  Mask2 recist_label;
};

/// Normalizes the volume (if needed), estimates the axial range and crops the ROI.
LesionCase prepare_case(const CtVolume& volume, const LesionRecord& record,
                        std::ptrdiff_t min_edge = kDefaultMinCropPx);

struct TrainingSample {
  std::string lesion_id;
  std::ptrdiff_t offset = 0;
  int iteration = 0;  // 0 for RECIST samples, k for samples added at iteration k
  Image<float> image;
  Mask2 label;
};

/// Training samples indexed by (lesion_id, offset). Insertion never replaces an
/// existing sample, so RECIST labels are never overwritten.
class TrainingSet {
 public:
  bool contains(const std::string& lesion_id, std::ptrdiff_t offset) const;
  /// Returns false (and leaves the set unchanged) if the key already exists.
  bool insert(TrainingSample sample);
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<TrainingSample>& samples() const noexcept { return samples_; }
  const TrainingSample& operator[](std::size_t i) const { return samples_[i]; }

 private:
  std::vector<TrainingSample> samples_;
  std::set<std::pair<std::string, std::ptrdiff_t>> keys_;
};

/// Offset-0 samples of every case, in case order.
TrainingSet recist_training_set(const std::vector<LesionCase>& cases);

enum class Optimizer { Sgd, Adam };

struct TrainSchedule {
  int k_max = 3;
  int epoch_cap = 200;           // per call of train_until_converged
  int plateau_window = 20;
  double plateau_tolerance = 1e-3;
  Optimizer optimizer = Optimizer::Sgd;
  double learning_rate = 2e-4;
  int lr_halving_epochs = 100;   // 0 disables halving
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 48;
  bool augment_flips = false;    // random horizontal/vertical flips per sample
  LossWeights loss;

  void validate() const;
  friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

const char* optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& name);

struct TrainResult {
  ModelParams<float> params;        // best-loss parameters
  std::vector<double> epoch_loss;   // mean per-sample loss of each epoch
  double best_loss = 0.0;
  int epochs = 0;
  bool plateaued = false;
};

/// Minimizes the joint loss over the training set. Each epoch visits every
/// sample once in a seeded shuffle; the parameters after the epoch with the
/// lowest mean loss are returned. Stops at the epoch cap or when the moving
/// average over `plateau_window` epochs improves by less than
/// `plateau_tolerance` (relative) on the previous window. Throws
/// DivergenceError on a non-finite loss or gradient.
TrainResult train_until_converged(const TrainingSet& set, const ModelParams<float>& params_in,
                                  const TrainSchedule& schedule, std::uint64_t seed,
                                  const std::function<void(int, double)>& on_epoch = {});

/// Foreground probability of the final map, for one normalized crop.
Image<double> predict_probability(const Image<float>& crop, const ModelParams<float>& params,
                                  const BranchWeights<float>& weights);

/// predict_probability -> CRF refine -> binarize at 0.5.
Mask2 predict_refined(const Image<float>& crop, const ModelParams<float>& params, const BranchWeights<float>& weights,
                      const CrfConfig& crf);

/// Directions in which a lesion's propagation has stopped after an empty refined mask.
struct PropagationState {
  std::map<std::string, std::pair<bool, bool>> stopped;  // (negative, positive)
};

enum class ExpansionStatus { Added, Empty, OutOfRange, Duplicate, Stopped };
const char* expansion_status_name(ExpansionStatus s);

struct ExpansionEvent {
  std::string lesion_id;
  std::ptrdiff_t offset = 0;
  ExpansionStatus status = ExpansionStatus::Added;
};

/// One inner step of the progressive loop at distance k >= 1: for each case and
/// each offset in {-k, +k} inside its axial range, not yet in the set and not in
/// a stopped direction, predict, refine and add the binarized mask. An empty
/// mask stops that direction. Returns the number of samples added.
std::size_t expand_training_set(TrainingSet& set, const ModelParams<float>& params,
                                const std::vector<LesionCase>& cases, int k, const CrfConfig& crf,
                                PropagationState& state, std::vector<ExpansionEvent>* events = nullptr);

struct IterationRecord {
  int k = 0;
  std::size_t samples_added = 0;
  std::size_t total_samples = 0;
  double mean_loss = 0.0;  // final-epoch mean loss of the model after this iteration
  int epochs = 0;
  double wall_time_s = 0.0;
};

struct ProgressiveOptions {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const std::string&)> log;
};

struct ProgressiveResult {
  ModelParams<float> initial;  // theta_init, trained on RECIST slices only
  ModelParams<float> final;
  std::vector<ModelParams<float>> snapshots;  // model after iteration k, k = 0..last
  std::vector<IterationRecord> iterations;    // row 0 is the RECIST-only training
  TrainingSet training_set;
  std::vector<ExpansionEvent> events;
};

/// Seed used for the training call of iteration k.
std::uint64_t training_seed(std::uint64_t seed, int k);

/// Trains theta_init on the RECIST samples, then for k = 1..k_max expands the
/// training set and retrains from the previous parameters. Stops early after an
/// iteration that adds no sample (that iteration does not retrain). A run with a
/// smaller k_max is an exact prefix of this one, so snapshots[k] equals the
/// final model of the same run with k_max = k.
ProgressiveResult run_progressive(const std::vector<LesionCase>& cases, const ModelParams<float>& theta0,
                                  const TrainSchedule& schedule, const CrfConfig& crf,
                                  const ProgressiveOptions& options = {});

/// CSV columns: iteration,samples_added,total_samples,mean_loss,wall_time_s.
void write_run_report(const std::filesystem::path& path, const std::vector<IterationRecord>& rows,
                      bool include_wall_time = true);

}  // namespace plseg
