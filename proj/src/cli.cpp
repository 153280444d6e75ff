#include "dbnbench/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <iostream>
#include <optional>
#include <sstream>

namespace dbnbench {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::erase_if(cleaned, [](char c) { return c == '[' || c == ']' || c == '"'; });
  std::istringstream in(cleaned);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

template <typename T, typename Convert>
std::vector<T> parse_list(const std::string& text, Convert convert, const char* what) {
  std::vector<T> out;
  for (const auto& tok : split_list(text)) {
    std::size_t used = 0;
    try {
      out.push_back(convert(tok, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError("bad " + std::string(what) + " in list: '" + tok + "'");
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

// Raw flag values; unset optionals fall back to the sampler's own defaults.
struct RawArgs {
  std::string sampler = "sa";
  std::optional<int> k;
  std::optional<std::string> cd_mode;
  std::optional<int> sweeps;
  std::optional<int> samples;
  std::optional<double> beta_initial;
  std::optional<double> beta_final;
  std::optional<std::string> update_order;
  std::optional<std::string> pt_ladder;
  std::optional<int> pt_rounds;
  std::optional<int> pt_sweeps_per_exchange;
  std::string optimizer = "momentum";
  std::optional<double> lr;
  std::optional<double> momentum_mu;
  std::string finetune_optimizer = "momentum";
  std::optional<double> finetune_lr;
  std::optional<double> finetune_momentum_mu;
  std::string pretrain_epochs = "12,25,50";
  std::string backprop_epochs = "40,100";
  int batch_size = 100;
  int trials = 5;
  std::uint64_t seed = 1;
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
  std::string mnist_dir;
  std::string out;
  std::string shape = "32,32,32,10";
  int jobs = 1;
};

void add_options(CLI::App& app, RawArgs& a) {
  // Config files hand "1,2,3" over as three values; join them back for parse_list.
  constexpr auto list = CLI::MultiOptionPolicy::Join;
  app.set_config("--config", "", "Flat `key = value` file; flags override it");
  app.add_option("--sampler", a.sampler, "cd, cd-marginal, cd-discrete, sa, pt or exact")->capture_default_str();
  app.add_option("--k", a.k, "CD Gibbs steps");
  app.add_option("--cd-mode", a.cd_mode, "marginal or discrete");
  app.add_option("--sweeps", a.sweeps, "SA sweeps per sample");
  app.add_option("--samples", a.samples, "SA samples or PT ladders per estimate");
  app.add_option("--beta-initial", a.beta_initial, "SA starting inverse temperature");
  app.add_option("--beta-final", a.beta_final, "SA final inverse temperature");
  app.add_option("--update-order", a.update_order, "random or fixed");
  app.add_option("--pt-ladder", a.pt_ladder, "Ascending inverse temperatures ending at 1")->multi_option_policy(list);
  app.add_option("--pt-rounds", a.pt_rounds, "PT exchange rounds");
  app.add_option("--pt-sweeps-per-exchange", a.pt_sweeps_per_exchange, "PT sweeps between swaps");
  app.add_option("--optimizer", a.optimizer, "Pretraining optimizer: momentum or adam")->capture_default_str();
  app.add_option("--lr", a.lr, "Pretraining learning rate");
  app.add_option("--momentum-mu", a.momentum_mu, "Pretraining momentum coefficient");
  app.add_option("--finetune-optimizer", a.finetune_optimizer, "momentum or adam")->capture_default_str();
  app.add_option("--finetune-lr", a.finetune_lr, "Fine-tuning learning rate");
  app.add_option("--finetune-momentum-mu", a.finetune_momentum_mu, "Fine-tuning momentum coefficient");
  app.add_option("--pretrain-epochs", a.pretrain_epochs, "Pretraining checkpoints")->capture_default_str()->multi_option_policy(list);
  app.add_option("--backprop-epochs", a.backprop_epochs, "Fine-tuning checkpoints")->capture_default_str()->multi_option_policy(list);
  app.add_option("--batch-size", a.batch_size, "Minibatch size")->capture_default_str();
  app.add_option("--trials", a.trials, "Independent trials")->capture_default_str();
  app.add_option("--seed", a.seed, "Base seed; trial t uses seed + t")->capture_default_str();
  app.add_option("--train-subset", a.train_subset, "Training images drawn per trial");
  app.add_option("--test-subset", a.test_subset, "Test images drawn per trial");
  app.add_option("--mnist-dir", a.mnist_dir, "Directory with the MNIST IDX files")->required();
  app.add_option("--out", a.out, "Curve CSV path; the summary goes next to it");
  app.add_option("--shape", a.shape, "Unit counts per layer, input first")->capture_default_str()->multi_option_policy(list);
  app.add_option("--jobs", a.jobs, "Trials run concurrently")->capture_default_str();
}

OptimizerConfig make_optimizer(const std::string& kind, std::optional<double> lr, std::optional<double> mu,
                               const char* which) {
  OptimizerConfig cfg;
  if (kind == "momentum") {
    cfg = OptimizerConfig::momentum_default();
  } else if (kind == "adam") {
    cfg = OptimizerConfig::adam_default();
    if (mu) throw ConfigError(std::string(which) + " momentum coefficient given for adam");
  } else {
    throw ConfigError(std::string("unknown ") + which + " optimizer '" + kind + "'");
  }
  if (lr) cfg.learning_rate = *lr;
  if (mu) cfg.momentum = *mu;
  return cfg;
}

SamplerConfig make_sampler(const RawArgs& a) {
  auto reject = [&](bool given, const char* flag) {
    if (given) throw ConfigError(std::string(flag) + " does not apply to sampler '" + a.sampler + "'");
  };
  const bool sa_flags = a.sweeps || a.beta_initial || a.beta_final || a.update_order;
  const bool pt_flags = a.pt_ladder || a.pt_rounds || a.pt_sweeps_per_exchange;

  if (a.sampler == "cd" || a.sampler == "cd-marginal" || a.sampler == "cd-discrete") {
    reject(sa_flags, "SA options");
    reject(pt_flags, "PT options");
    reject(a.samples.has_value(), "--samples");
    CdConfig cd;
    if (a.k) cd.k = *a.k;
    std::string mode = a.sampler == "cd-discrete" ? "discrete" : "marginal";
    if (a.cd_mode) {
      if (a.sampler != "cd" && *a.cd_mode != mode) {
        throw ConfigError("--cd-mode " + *a.cd_mode + " contradicts --sampler " + a.sampler);
      }
      mode = *a.cd_mode;
    }
    if (mode == "marginal") {
      cd.mode = CdMode::marginal;
    } else if (mode == "discrete") {
      cd.mode = CdMode::discrete;
    } else {
      throw ConfigError("unknown CD mode '" + mode + "'");
    }
    return cd;
  }
  reject(a.k.has_value(), "--k");
  reject(a.cd_mode.has_value(), "--cd-mode");
  if (a.sampler == "sa") {
    reject(pt_flags, "PT options");
    SaConfig sa;
    if (a.sweeps) sa.sweeps = *a.sweeps;
    if (a.samples) sa.samples = *a.samples;
    if (a.beta_initial) sa.beta_initial = *a.beta_initial;
    if (a.beta_final) sa.beta_final = *a.beta_final;
    if (a.update_order) {
      if (*a.update_order == "random") {
        sa.order = UpdateOrder::random_permutation;
      } else if (*a.update_order == "fixed") {
        sa.order = UpdateOrder::fixed_block;
      } else {
        throw ConfigError("unknown update order '" + *a.update_order + "'");
      }
    }
    return sa;
  }
  if (a.sampler == "pt") {
    reject(sa_flags, "SA options");
    PtConfig pt;
    if (a.pt_ladder) pt.betas = parse_real_list(*a.pt_ladder);
    if (a.pt_rounds) pt.rounds = *a.pt_rounds;
    if (a.pt_sweeps_per_exchange) pt.sweeps_per_exchange = *a.pt_sweeps_per_exchange;
    if (a.samples) pt.samples = *a.samples;
    return pt;
  }
  if (a.sampler == "exact") {
    reject(sa_flags, "SA options");
    reject(pt_flags, "PT options");
    reject(a.samples.has_value(), "--samples");
    return ExactConfig{};
  }
  throw ConfigError("unknown sampler '" + a.sampler + "'");
}

ExperimentConfig to_config(const RawArgs& a) {
  ExperimentConfig cfg;
  cfg.sampler = make_sampler(a);
  cfg.pretrain_optimizer = make_optimizer(a.optimizer, a.lr, a.momentum_mu, "pretraining");
  cfg.finetune_optimizer =
      make_optimizer(a.finetune_optimizer, a.finetune_lr, a.finetune_momentum_mu, "fine-tuning");
  cfg.pretrain_epochs = parse_int_list(a.pretrain_epochs);
  cfg.backprop_epochs = parse_int_list(a.backprop_epochs);
  cfg.batch_size = a.batch_size;
  cfg.trials = a.trials;
  cfg.base_seed = a.seed;
  cfg.train_subset = a.train_subset;
  cfg.test_subset = a.test_subset;
  cfg.mnist_dir = a.mnist_dir;
  cfg.out = a.out;
  cfg.shape.clear();
  for (int units : parse_int_list(a.shape)) {
    if (units <= 0) throw ConfigError("shape entries must be positive");
    cfg.shape.push_back(static_cast<std::size_t>(units));
  }
  cfg.jobs = a.jobs;
  cfg.validate();
  return cfg;
}

// CLI11 wants argv order with the program name first, reversed for its vector overload.
std::vector<std::string> for_cli11(const std::vector<std::string>& args) {
  return {args.rbegin(), args.rend()};
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  return parse_list<int>(text, [](const std::string& s, std::size_t* used) { return std::stoi(s, used); }, "integer");
}

std::vector<double> parse_real_list(const std::string& text) {
  return parse_list<double>(text, [](const std::string& s, std::size_t* used) { return std::stod(s, used); },
                            "number");
}

ExperimentConfig parse_experiment_args(const std::vector<std::string>& args) {
  CLI::App app{"DBN pretraining benchmark"};
  RawArgs raw;
  add_options(app, raw);
  try {
    auto reversed = for_cli11(args);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  return to_config(raw);
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  {
    // Help is handled before anything else so it never needs --mnist-dir.
    const bool help = std::any_of(args.begin(), args.end(), [](const std::string& s) {
      return s == "-h" || s == "--help";
    });
    if (help) {
      CLI::App app{"DBN pretraining benchmark"};
      RawArgs raw;
      add_options(app, raw);
      out << app.help();
      return kExitOk;
    }
  }
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_args(args);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const AccuracyCurve curve = run_experiment(cfg);
    const SummaryTable summary = aggregate(curve);
    if (cfg.out.empty()) {
      out << to_csv(curve);
    } else {
      out << "wrote " << cfg.out.string() << " and " << summary_path_for(cfg.out).string() << "\n";
    }
    out << to_csv(summary);
  } catch (const IdxError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CsvIoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    // Subset larger than the dataset and the like.
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace dbnbench
