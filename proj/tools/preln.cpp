#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "preln/bounds.hpp"
#include "preln/checkpoint.hpp"
#include "preln/config.hpp"
#include "preln/experiment.hpp"
#include "preln/format.hpp"
#include "preln/verify.hpp"

namespace fs = std::filesystem;
using namespace preln;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (const char* env = std::getenv("PRELN_OUT_DIR"); env && *env) cfg.output_dir = env;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

fs::path prepare_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<SchemeSpec> resolve_schemes(const std::string& list, const RunConfig& cfg) {
  std::vector<SchemeSpec> out;
  for (const auto& name : split_list(list)) {
    if (auto s = builtin_scheme(name)) {
      out.push_back(*s);
    } else if (name == cfg.scheme.name) {
      out.push_back(cfg.scheme);
    } else {
      throw ConfigError("unknown scheme '" + name + "'");
    }
  }
  if (out.empty()) throw ConfigError("no schemes given");
  return out;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& list, F&& parse) {
  std::vector<T> out;
  for (const auto& item : split_list(list)) {
    try {
      out.push_back(parse(item));
    } catch (const std::exception&) {
      throw ConfigError("bad list item '" + item + "'");
    }
  }
  return out;
}

int cmd_verify(const std::string& filter) {
  int failed = 0;
  const auto results = run_checks(filter, [&](const CheckResult& r) {
    std::cout << check_result_json(r) << std::endl;
    if (!r.passed) ++failed;
  });
  if (results.empty()) {
    std::cerr << "no check matches '" << filter << "'\n";
    return kExitConfig;
  }
  nlohmann::ordered_json summary;
  summary["summary"] = true;
  summary["checks"] = results.size();
  summary["failed"] = failed;
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    if (!r.passed) names.push_back(r.name);
  }
  summary["failed_checks"] = names;
  std::cout << summary.dump() << std::endl;
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_bounds(const Common& common, const std::string& schemes_arg, std::optional<std::uint64_t> seed) {
  const RunConfig cfg = load(common);
  const auto schemes = resolve_schemes(schemes_arg, cfg);
  const std::uint64_t s = seed.value_or(cfg.train.seed);
  StreamProbeOptions opt;
  opt.probe_batches = cfg.bounds.probe_batches;
  opt.probe_seq_len = cfg.bounds.probe_seq_len;
  if (cfg.bounds.layers > 0) opt.layers = cfg.bounds.layers;
  opt.single_precision = cfg.bounds.precision == Precision::Single;
  const auto reports = stream_bound_reports(cfg.model, schemes, init_stream(s), probe_stream(s), opt);
  const fs::path dir = prepare_dir(cfg);
  for (const auto& r : reports) {
    const fs::path path = dir / ("bounds_" + r.scheme + ".csv");
    auto out = open_out(path);
    write_bound_csv(out, r);
    std::cout << r.scheme << ": layer 1 ffn_bound " << format_number(r.layers.front().ffn_bound)
              << " attn_bound " << format_number(r.layers.front().attn_bound) << " -> " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_train(const Common& common, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load(common);
  if (seed) cfg.train.seed = *seed;
  const fs::path dir = prepare_dir(cfg);
  const RunOutcome outcome = run_training(cfg, [&](const TrainLogRecord& r) {
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.train_loss << " grad " << r.grad_norm_preclip << '\n';
  });
  {
    auto log = open_out(dir / "train_log.jsonl");
    write_train_log(log, cfg, outcome);
  }
  save_checkpoint(dir / "checkpoint.bin", cfg.model_config(), outcome.params);
  {
    auto summary = open_out(dir / "summary.json");
    summary << summary_json(cfg, outcome.summary) << '\n';
  }
  std::cout << summary_json(cfg, outcome.summary) << '\n';
  return kExitOk;
}

int cmd_compare(const Common& common, const std::string& schemes_arg, const std::string& seeds,
                const std::string& lrs, const std::string& seq_lens, bool token_budget) {
  const RunConfig cfg = load(common);
  CompareOptions opt;
  opt.schemes = resolve_schemes(schemes_arg, cfg);
  opt.seeds = parse_list<std::uint64_t>(seeds, [](const std::string& s) { return std::stoull(s); });
  opt.lrs = parse_list<double>(lrs, [](const std::string& s) { return parse_number(s); });
  opt.seq_lens = parse_list<int>(seq_lens, [](const std::string& s) { return std::stoi(s); });
  opt.token_budget = token_budget;
  if (opt.seeds.empty()) throw ConfigError("compare needs at least one seed");
  const fs::path dir = prepare_dir(cfg);
  const CompareResult result = compare_schemes(cfg, opt, [](const CompareRow& r) {
    std::cerr << r.scheme << " seed " << r.seed << " lr " << r.lr << " L " << r.seq_len << ": "
              << (r.error.empty() ? std::string(to_string(r.summary.status)) : "error: " + r.error) << '\n';
  });
  {
    auto out = open_out(dir / "compare.csv");
    write_compare_csv(out, result);
  }
  {
    auto out = open_out(dir / "compare_bounds.csv");
    write_compare_bounds_csv(out, result);
  }
  std::cout << result.rows.size() << " runs -> " << (dir / "compare.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-LN transformer gradient-norm bounds and toy training"};
  app.require_subcommand(1);

  std::string filter;
  auto* verify = app.add_subcommand("verify", "run the invariant checks");
  verify->add_option("--filter", filter, "only checks whose name contains this");

  Common bounds_opts;
  std::string bounds_schemes;
  std::optional<std::uint64_t> bounds_seed;
  auto* bounds = app.add_subcommand("bounds", "layer-wise analytic bounds at initialization");
  bounds->add_option("--config", bounds_opts.config_path)->required();
  bounds->add_option("--schemes", bounds_schemes)->required();
  bounds->add_option("--seed", bounds_seed);
  bounds->add_option("--set", bounds_opts.overrides, "key=value override")->take_all();
  bounds->add_option("--out", bounds_opts.out);

  Common train_opts;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "toy pre-training run");
  train_cmd->add_option("--config", train_opts.config_path)->required();
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--set", train_opts.overrides, "key=value override")->take_all();
  train_cmd->add_option("--out", train_opts.out);

  Common compare_opts;
  std::string compare_schemes_arg, seeds, lrs, seq_lens;
  bool token_budget = false;
  auto* compare = app.add_subcommand("compare", "schemes x seeds x lrs x lengths sweep");
  compare->add_option("--config", compare_opts.config_path)->required();
  compare->add_option("--schemes", compare_schemes_arg)->required();
  compare->add_option("--seeds", seeds)->required();
  compare->add_option("--lrs", lrs);
  compare->add_option("--seq-lens", seq_lens);
  compare->add_flag("--token-budget", token_budget);
  compare->add_option("--set", compare_opts.overrides, "key=value override")->take_all();
  compare->add_option("--out", compare_opts.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*verify) return cmd_verify(filter);
    if (*bounds) return cmd_bounds(bounds_opts, bounds_schemes, bounds_seed);
    if (*train_cmd) return cmd_train(train_opts, train_seed);
    if (*compare) return cmd_compare(compare_opts, compare_schemes_arg, seeds, lrs, seq_lens, token_budget);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}
