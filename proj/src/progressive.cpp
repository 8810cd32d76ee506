#include "plseg/progressive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "plseg/checkpoint.hpp"
#include "plseg/metrics.hpp"
#include "plseg/phantom.hpp"

namespace plseg {

LesionCase prepare_case(const CtVolume& volume, const LesionRecord& record, std::ptrdiff_t min_edge) {
  validate_record(record, volume.shape());
  const CtVolume norm = volume.domain == IntensityDomain::Normalized ? volume : normalize_intensity(volume);
  LesionCase c;
  c.id = record.id;
  c.range = estimate_axial_range(record, norm);
  c.roi = crop_roi(norm, record, c.range, min_edge);
  c.recist_label = crop_mask(record.recist_mask, c.roi);
  return c;
}

bool TrainingSet::contains(const std::string& lesion_id, std::ptrdiff_t offset) const {
  return keys_.count({lesion_id, offset}) > 0;
}

bool TrainingSet::insert(TrainingSample sample) {
  if (sample.image.rows() != sample.label.rows() || sample.image.cols() != sample.label.cols()) {
    throw ShapeMismatch("training sample: image and label shapes differ");
  }
  if (!keys_.insert({sample.lesion_id, sample.offset}).second) return false;
  samples_.push_back(std::move(sample));
  return true;
}

TrainingSet recist_training_set(const std::vector<LesionCase>& cases) {
  TrainingSet set;
  for (const auto& c : cases) {
    if (!set.insert({c.id, 0, 0, c.roi.at_offset(0), c.recist_label})) {
      throw InvalidArgument("duplicate lesion id: " + c.id);
    }
  }
  return set;
}

void TrainSchedule::validate() const {
  if (k_max < 0) throw InvalidArgument("schedule.k_max must be >= 0");
  if (epoch_cap < 0) throw InvalidArgument("schedule.epoch_cap must be >= 0");
  if (plateau_window < 1) throw InvalidArgument("schedule.plateau_window must be >= 1");
  if (plateau_tolerance < 0.0) throw InvalidArgument("schedule.plateau_tolerance must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("schedule.learning_rate must be positive");
  if (lr_halving_epochs < 0) throw InvalidArgument("schedule.lr_halving_epochs must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("schedule.momentum must be in [0,1)");
  if (batch_size < 1) throw InvalidArgument("schedule.batch_size must be >= 1");
  if (loss.w_m < 0.0 || loss.w_b < 0.0 || loss.w_f < 0.0) throw InvalidArgument("loss weights must be >= 0");
}

const char* optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adam") return Optimizer::Adam;
  throw InvalidArgument("unknown optimizer: " + name);
}

namespace {

template <typename A>
A flipped(const A& a, bool rows, bool cols) {
  if (rows && cols) return a.reverse();
  if (rows) return a.colwise().reverse();
  if (cols) return a.rowwise().reverse();
  return a;
}

bool plateau_reached(const std::vector<double>& loss, int window, double tol) {
  const auto n = static_cast<std::ptrdiff_t>(loss.size());
  if (n < 2 * window) return false;
  double prev = 0.0, cur = 0.0;
  for (std::ptrdiff_t i = n - 2 * window; i < n - window; ++i) prev += loss[i];
  for (std::ptrdiff_t i = n - window; i < n; ++i) cur += loss[i];
  prev /= window;
  cur /= window;
  return (prev - cur) < tol * std::abs(prev);
}

}  // namespace

TrainResult train_until_converged(const TrainingSet& set, const ModelParams<float>& params_in,
                                  const TrainSchedule& schedule, std::uint64_t seed,
                                  const std::function<void(int, double)>& on_epoch) {
  schedule.validate();
  TrainResult result;
  result.params = params_in;
  result.best_loss = std::numeric_limits<double>::quiet_NaN();
  if (schedule.epoch_cap == 0) return result;
  if (set.empty()) throw InvalidArgument("train_until_converged: empty training set");

  ModelParams<float> params = params_in;
  const NetConfig& cfg = params.config;
  Eigen::VectorXd theta = params.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  std::int64_t step = 0;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < schedule.epoch_cap; ++epoch) {
    double lr = schedule.learning_rate;
    if (schedule.lr_halving_epochs > 0) lr *= std::pow(0.5, epoch / schedule.lr_halving_epochs);
    std::shuffle(order.begin(), order.end(), rng);

    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      const BranchWeights<float> bw = prepare_branch_weights(params);
      GradientAccumulator<float> acc(params, bw);
      for (std::size_t n = start; n < stop; ++n) {
        const TrainingSample& s = set[order[n]];
        const bool fr = schedule.augment_flips && (rng() & 1u);
        const bool fc = schedule.augment_flips && (rng() & 1u);
        const Image<float> img = flipped(s.image, fr, fc);
        const Mask2 lbl = flipped(s.label, fr, fc);
        ForwardTape<float> tape;
        forward(img, params, bw, &tape);
        NetworkOutputs<float> grads;
        const double loss = joint_loss(tape.outputs, lbl, schedule.loss, cfg, &grads);
        if (!std::isfinite(loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " on sample " + s.lesion_id +
                                "@" + std::to_string(s.offset));
        }
        acc.add(tape, grads);
        sum += loss;
      }
      const Eigen::VectorXd g = acc.finish().flatten() / static_cast<double>(stop - start);
      ++step;
      if (schedule.optimizer == Optimizer::Sgd) {
        m = schedule.momentum * m + g;
        theta -= lr * m;
      } else {
        m = schedule.adam_beta1 * m + (1.0 - schedule.adam_beta1) * g;
        v = schedule.adam_beta2 * v + (1.0 - schedule.adam_beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(schedule.adam_beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(schedule.adam_beta2, static_cast<double>(step));
        theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + schedule.adam_eps);
      }
      params.unflatten(theta);
      if (!params.all_finite()) throw DivergenceError("non-finite parameters at epoch " + std::to_string(epoch));
    }

    const double mean = sum / static_cast<double>(set.size());
    result.epoch_loss.push_back(mean);
    result.epochs = epoch + 1;
    if (on_epoch) on_epoch(epoch, mean);
    if (mean < best) {
      best = mean;
      result.params = params;
      result.best_loss = mean;
    }
    if (plateau_reached(result.epoch_loss, schedule.plateau_window, schedule.plateau_tolerance)) {
      result.plateaued = true;
      break;
    }
  }
  return result;
}

Image<double> predict_probability(const Image<float>& crop, const ModelParams<float>& params,
                                  const BranchWeights<float>& weights) {
  return forward(crop, params, weights).final_map.cast<double>();
}

Mask2 predict_refined(const Image<float>& crop, const ModelParams<float>& params, const BranchWeights<float>& weights,
                      const CrfConfig& crf) {
  const Image<double> prob = predict_probability(crop, params, weights);
  return binarize(refine(prob, crop.cast<double>(), crf));
}

const char* expansion_status_name(ExpansionStatus s) {
  switch (s) {
    case ExpansionStatus::Added: return "added";
    case ExpansionStatus::Empty: return "empty";
    case ExpansionStatus::OutOfRange: return "out_of_range";
    case ExpansionStatus::Duplicate: return "duplicate";
    case ExpansionStatus::Stopped: return "stopped";
  }
  return "unknown";
}

std::size_t expand_training_set(TrainingSet& set, const ModelParams<float>& params,
                                const std::vector<LesionCase>& cases, int k, const CrfConfig& crf,
                                PropagationState& state, std::vector<ExpansionEvent>* events) {
  if (k < 1) throw InvalidArgument("expand_training_set: k must be >= 1");
  std::optional<BranchWeights<float>> weights;
  std::size_t added = 0;
  for (const auto& c : cases) {
    auto& stopped = state.stopped[c.id];
    for (const int sign : {-1, +1}) {
      const std::ptrdiff_t alpha = sign * k;
      bool& dir_stopped = sign < 0 ? stopped.first : stopped.second;
      ExpansionStatus status;
      if (!c.range.contains(alpha) || !c.roi.has_offset(alpha)) {
        status = ExpansionStatus::OutOfRange;
      } else if (set.contains(c.id, alpha)) {
        status = ExpansionStatus::Duplicate;
      } else if (dir_stopped) {
        status = ExpansionStatus::Stopped;
      } else {
        if (!weights) weights = prepare_branch_weights(params);
        const Image<float>& img = c.roi.at_offset(alpha);
        Mask2 label = predict_refined(img, params, *weights, crf);
        if (count_foreground(label) == 0) {
          dir_stopped = true;
          status = ExpansionStatus::Empty;
        } else {
          set.insert({c.id, alpha, k, img, std::move(label)});
          ++added;
          status = ExpansionStatus::Added;
        }
      }
      if (events) events->push_back({c.id, alpha, status});
    }
  }
  return added;
}

std::uint64_t training_seed(std::uint64_t seed, int k) {
  return derive_seed(seed, 1000u + static_cast<std::uint64_t>(k));
}

ProgressiveResult run_progressive(const std::vector<LesionCase>& cases, const ModelParams<float>& theta0,
                                  const TrainSchedule& schedule, const CrfConfig& crf,
                                  const ProgressiveOptions& options) {
  schedule.validate();
  crf.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  auto save = [&](int k, const ModelParams<float>& p) {
    if (options.checkpoint_dir.empty()) return;
    save_checkpoint(options.checkpoint_dir / ("iter_" + std::to_string(k)), p.cast<double>(), k, options.seed);
  };

  auto epoch_log = [&](int k) -> std::function<void(int, double)> {
    if (!options.log) return {};
    return [&, k](int epoch, double loss) {
      if ((epoch + 1) % 10 == 0) {
        options.log("iteration " + std::to_string(k) + " epoch " + std::to_string(epoch + 1) + ": loss " +
                    format_number(loss) + " (" + format_number(elapsed()) + " s)");
      }
    };
  };

  ProgressiveResult res;
  res.training_set = recist_training_set(cases);
  log("iteration 0: training on " + std::to_string(res.training_set.size()) + " RECIST slices");
  TrainResult tr = train_until_converged(res.training_set, theta0, schedule, training_seed(options.seed, 0), epoch_log(0));
  res.initial = tr.params;
  res.iterations.push_back({0, res.training_set.size(), res.training_set.size(), tr.best_loss, tr.epochs, elapsed()});
  log("iteration 0: " + std::to_string(tr.epochs) + " epochs, loss " + format_number(tr.best_loss));
  save(0, tr.params);
  res.snapshots.push_back(tr.params);

  ModelParams<float> params = tr.params;
  double last_loss = tr.best_loss;
  PropagationState state;
  for (int k = 1; k <= schedule.k_max; ++k) {
    const std::size_t added = expand_training_set(res.training_set, params, cases, k, crf, state, &res.events);
    log("iteration " + std::to_string(k) + ": added " + std::to_string(added) + " samples, total " +
        std::to_string(res.training_set.size()));
    if (added == 0) {
      res.iterations.push_back({k, 0, res.training_set.size(), last_loss, 0, elapsed()});
      break;
    }
    tr = train_until_converged(res.training_set, params, schedule, training_seed(options.seed, k), epoch_log(k));
    params = tr.params;
    last_loss = tr.best_loss;
    res.iterations.push_back({k, added, res.training_set.size(), tr.best_loss, tr.epochs, elapsed()});
    log("iteration " + std::to_string(k) + ": " + std::to_string(tr.epochs) + " epochs, loss " +
        format_number(tr.best_loss));
    save(k, params);
    res.snapshots.push_back(params);
  }
  res.final = std::move(params);
  return res;
}

void write_run_report(const std::filesystem::path& path, const std::vector<IterationRecord>& rows,
                      bool include_wall_time) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,samples_added,total_samples,mean_loss" << (include_wall_time ? ",wall_time_s" : "") << '\n';
  for (const auto& r : rows) {
    out << r.k << ',' << r.samples_added << ',' << r.total_samples << ',' << format_number(r.mean_loss);
    if (include_wall_time) out << ',' << format_number(r.wall_time_s);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace plseg
