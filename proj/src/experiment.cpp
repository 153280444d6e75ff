#include "dbnbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dbnbench/rng.hpp"

namespace dbnbench {

void ExperimentConfig::validate() const {
  auto check_list = [](const std::vector<int>& list, const char* what) {
    if (list.empty()) throw ConfigError(std::string(what) + " checkpoint list is empty");
    for (int e : list) {
      if (e < 0) throw ConfigError(std::string(what) + " checkpoints must be non-negative");
    }
  };
  check_list(pretrain_epochs, "pretrain");
  check_list(backprop_epochs, "backprop");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (shape.size() < 2) throw ConfigError("shape needs at least an input and an output layer");
  for (std::size_t units : shape) {
    if (units == 0) throw ConfigError("shape entries must be positive");
  }
  if (shape.front() != kCoarsePixels) {
    throw ConfigError("shape must start with the " + std::to_string(kCoarsePixels) + " input units");
  }
  if (shape.back() != 10) throw ConfigError("shape must end with the 10 class units");
  if (train_subset && *train_subset == 0) throw ConfigError("train subset must be positive");
  if (test_subset && *test_subset == 0) throw ConfigError("test subset must be positive");
  pretrain_optimizer.validate();
  finetune_optimizer.validate();
  std::visit([](const auto& s) {
    if constexpr (requires { s.validate(); }) s.validate();
  }, sampler);
}

bool AccuracyRow::failed() const { return std::isnan(test_accuracy); }

namespace {

constexpr std::uint64_t kTrainSubsetStream = 21;
constexpr std::uint64_t kTestSubsetStream = 22;
constexpr std::uint64_t kPretrainStream = 23;
constexpr std::uint64_t kFinetuneStream = 24;

bool finite_net(const FeedforwardNet& net) {
  for (const auto& layer : net.layers) {
    for (double x : layer.weights.flat()) {
      if (!std::isfinite(x)) return false;
    }
    for (double x : layer.bias) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

AccuracyCurve run_trial(const ExperimentConfig& cfg, int trial, const Dataset& train_full,
                        const Dataset& test_full) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started).count(); };

  const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(trial);
  const Dataset train =
      cfg.train_subset ? subsample(train_full, *cfg.train_subset, derive_seed(seed, kTrainSubsetStream)) : train_full;
  const Dataset test =
      cfg.test_subset ? subsample(test_full, *cfg.test_subset, derive_seed(seed, kTestSubsetStream)) : test_full;
  if (train.empty() || test.empty()) throw std::invalid_argument("experiment needs nonempty train and test sets");

  const auto pretrain_points = sorted_unique(cfg.pretrain_epochs);
  const auto backprop_points = sorted_unique(cfg.backprop_epochs);

  AccuracyCurve rows;
  auto fail_all = [&] {
    rows.clear();
    const double t = elapsed();
    for (int pe : pretrain_points) {
      for (int be : backprop_points) rows.push_back({trial, pe, be, std::nan(""), t});
    }
    return rows;
  };

  try {
    TrainConfig train_cfg{cfg.sampler, cfg.pretrain_optimizer, cfg.batch_size};
    const std::uint64_t pretrain_seed = derive_seed(seed, kPretrainStream);

    // One pretraining trajectory, snapshotted at each checkpoint.
    std::map<int, Dbn> snapshots;
    if (pretrain_points.front() == 0) {
      snapshots.emplace(0, pretrain_dbn(train.images, train_cfg, 0, pretrain_seed, cfg.shape));
    }
    if (pretrain_points.back() > 0) {
      pretrain_dbn(train.images, train_cfg, pretrain_points.back(), pretrain_seed, cfg.shape,
                   [&](int epoch, const Dbn& dbn) {
                     if (std::binary_search(pretrain_points.begin(), pretrain_points.end(), epoch)) {
                       snapshots.emplace(epoch, dbn);
                     }
                   });
    }

    const BackpropConfig bp_cfg{cfg.finetune_optimizer, cfg.batch_size};
    for (const auto& [pe, dbn] : snapshots) {
      FeedforwardNet net = init_network(dbn);
      auto record = [&, pe = pe](int be, const FeedforwardNet& current) {
        if (!finite_net(current)) throw std::domain_error("fine-tuning produced non-finite parameters");
        rows.push_back({trial, pe, be, evaluate_accuracy(current, test), elapsed()});
      };
      if (backprop_points.front() == 0) record(0, net);
      train_backprop(std::move(net), train, backprop_points.back(), bp_cfg,
                     derive_seed(seed, kFinetuneStream, static_cast<std::uint64_t>(pe)),
                     [&](int epoch, const FeedforwardNet& current) {
                       if (std::binary_search(backprop_points.begin(), backprop_points.end(), epoch)) {
                         record(epoch, current);
                       }
                     });
    }
  } catch (const std::domain_error&) {
    // Non-finite parameters somewhere along the trial.
    return fail_all();
  }
  sort_rows(rows);
  return rows;
}

AccuracyCurve run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test) {
  cfg.validate();
  std::vector<AccuracyCurve> per_trial(static_cast<std::size_t>(cfg.trials));
  const int workers = std::min(cfg.jobs, cfg.trials);
  if (workers <= 1) {
    for (int t = 0; t < cfg.trials; ++t) per_trial[static_cast<std::size_t>(t)] = run_trial(cfg, t, train, test);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int t = next++; t < cfg.trials; t = next++) {
          try {
            per_trial[static_cast<std::size_t>(t)] = run_trial(cfg, t, train, test);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }
  AccuracyCurve curve;
  for (auto& rows : per_trial) curve.insert(curve.end(), rows.begin(), rows.end());
  sort_rows(curve);
  return curve;
}

AccuracyCurve run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset train = build_dataset(mnist_train_files(cfg.mnist_dir), std::nullopt, 0, "train");
  const Dataset test = build_dataset(mnist_test_files(cfg.mnist_dir), std::nullopt, 0, "test");
  AccuracyCurve curve = run_experiment(cfg, train, test);
  if (!cfg.out.empty()) {
    emit_csv(curve, cfg.out);
    emit_csv(aggregate(curve), summary_path_for(cfg.out));
  }
  return curve;
}

void sort_rows(AccuracyCurve& curve) {
  std::stable_sort(curve.begin(), curve.end(), [](const AccuracyRow& a, const AccuracyRow& b) {
    return std::tie(a.trial, a.pretrain_epochs, a.backprop_epochs) <
           std::tie(b.trial, b.pretrain_epochs, b.backprop_epochs);
  });
}

SummaryTable aggregate(const AccuracyCurve& curve) {
  if (curve.empty()) throw std::invalid_argument("aggregate: empty curve");
  std::map<std::pair<int, int>, std::vector<double>> cells;
  for (const auto& row : curve) {
    auto& cell = cells[{row.pretrain_epochs, row.backprop_epochs}];
    if (!row.failed()) cell.push_back(row.test_accuracy);
  }
  SummaryTable out;
  for (auto& [key, values] : cells) {
    SummaryRow s;
    s.pretrain_epochs = key.first;
    s.backprop_epochs = key.second;
    s.n_trials = static_cast<int>(values.size());
    if (values.empty()) {
      s.mean = s.std = s.min = s.max = std::nan("");
    } else {
      // Sorted so the sums do not depend on row order.
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / static_cast<double>(values.size());
      double sq = 0.0;
      for (double v : values) sq += (v - s.mean) * (v - s.mean);
      s.std = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
      s.min = values.front();
      s.max = values.back();
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CsvIoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw CsvIoError("failed writing " + path.string());
}

}  // namespace

std::string to_csv(AccuracyCurve curve) {
  sort_rows(curve);
  std::string text = std::string(kCurveHeader) + "\n";
  for (const auto& r : curve) {
    text += std::to_string(r.trial) + "," + std::to_string(r.pretrain_epochs) + "," +
            std::to_string(r.backprop_epochs) + "," + fmt(r.test_accuracy) + "," + fmt(r.wall_time_s) + "\n";
  }
  return text;
}

std::string to_csv(const SummaryTable& summary) {
  std::string text = std::string(kSummaryHeader) + "\n";
  for (const auto& s : summary) {
    text += std::to_string(s.pretrain_epochs) + "," + std::to_string(s.backprop_epochs) + "," + fmt(s.mean) + "," +
            fmt(s.std) + "," + fmt(s.min) + "," + fmt(s.max) + "," + std::to_string(s.n_trials) + "\n";
  }
  return text;
}

void emit_csv(const AccuracyCurve& curve, const std::filesystem::path& path) { write_file(path, to_csv(curve)); }

void emit_csv(const SummaryTable& summary, const std::filesystem::path& path) { write_file(path, to_csv(summary)); }

AccuracyCurve parse_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw CsvIoError("missing or unexpected curve header");
  AccuracyCurve curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw CsvIoError("line " + std::to_string(line_no) + ": expected 5 fields");
    try {
      curve.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stod(cells[3]),
                       std::stod(cells[4])});
    } catch (const std::logic_error&) {
      throw CsvIoError("line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return curve;
}

AccuracyCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvIoError("cannot open " + path.string());
  return parse_curve_csv(in);
}

std::filesystem::path summary_path_for(const std::filesystem::path& curve_path) {
  auto out = curve_path;
  out.replace_filename(curve_path.stem().string() + "_summary" + curve_path.extension().string());
  return out;
}

}  // namespace dbnbench
