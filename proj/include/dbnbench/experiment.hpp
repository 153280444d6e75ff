#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dbnbench/dataset.hpp"
#include "dbnbench/finetune.hpp"
#include "dbnbench/pretrain.hpp"
#include "dbnbench/samplers.hpp"

namespace dbnbench {

struct ExperimentConfig {
  SamplerConfig sampler = SaConfig{};
  OptimizerConfig pretrain_optimizer = OptimizerConfig::momentum_default();
  OptimizerConfig finetune_optimizer = OptimizerConfig::momentum_default();
  std::vector<int> pretrain_epochs{12, 25, 50};
  std::vector<int> backprop_epochs{40, 100};
  int batch_size = 100;
  int trials = 5;
  std::uint64_t base_seed = 1;
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
  std::filesystem::path mnist_dir;
  std::filesystem::path out;
  std::vector<std::size_t> shape = kDefaultShape;
  int jobs = 1;

  /// Throws ConfigError.
  void validate() const;
};

/// One test-accuracy measurement. Failed trials carry a NaN accuracy.
struct AccuracyRow {
  int trial = 0;
  int pretrain_epochs = 0;
  int backprop_epochs = 0;
  double test_accuracy = 0.0;
  double wall_time_s = 0.0;

  bool failed() const;
};

using AccuracyCurve = std::vector<AccuracyRow>;

struct SummaryRow {
  int pretrain_epochs = 0;
  int backprop_epochs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single trial
  double min = 0.0;
  double max = 0.0;
  int n_trials = 0;
};

using SummaryTable = std::vector<SummaryRow>;

/// Runs every trial on caller-supplied full datasets (subsampled per trial
/// when the config asks for subsets). Rows come back sorted.
AccuracyCurve run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test);

/// Loads MNIST from cfg.mnist_dir, runs, and writes the curve to cfg.out and
/// its summary next to it when cfg.out is set.
AccuracyCurve run_experiment(const ExperimentConfig& cfg);

/// One trial: pretrain once to the last checkpoint, fine-tune every snapshot.
AccuracyCurve run_trial(const ExperimentConfig& cfg, int trial, const Dataset& train, const Dataset& test);

/// Per (pretrain, backprop) cell statistics over successful trials.
SummaryTable aggregate(const AccuracyCurve& curve);

/// Sorted by (trial, pretrain_epochs, backprop_epochs).
void sort_rows(AccuracyCurve& curve);

inline constexpr const char* kCurveHeader = "trial,pretrain_epochs,backprop_epochs,test_accuracy,wall_time_s";
inline constexpr const char* kSummaryHeader = "pretrain_epochs,backprop_epochs,mean,std,min,max,n_trials";

std::string to_csv(AccuracyCurve curve);
std::string to_csv(const SummaryTable& summary);
void emit_csv(const AccuracyCurve& curve, const std::filesystem::path& path);
void emit_csv(const SummaryTable& summary, const std::filesystem::path& path);

AccuracyCurve parse_curve_csv(std::istream& in);
AccuracyCurve read_curve_csv(const std::filesystem::path& path);

/// `results.csv` -> `results_summary.csv`.
std::filesystem::path summary_path_for(const std::filesystem::path& curve_path);

/// Raised when results cannot be written or read back.
class CsvIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dbnbench
