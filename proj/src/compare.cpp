#include <map>
#include <ostream>
#include <tuple>

#include "preln/experiment.hpp"
#include "preln/format.hpp"

namespace preln {

namespace {

template <typename S>
RunOutcome run_typed(const RunConfig& config, const Corpus& corpus, const StepObserver& observer) {
  const ModelConfig model = config.model_config();
  Parameters<S> params = init_parameters<S>(model, config.scheme.init, init_stream(config.train.seed));
  BatchStream data(corpus, config.train.batch_size, model.seq_len,
                   RandomSource(config.train.seed).fork("batches"));
  TrainResult<S> r = train(std::move(params), model, config.train, data, observer);
  RunOutcome out;
  out.summary.status = r.status;
  out.summary.diverged_step = r.diverged_step;
  out.summary.steps_completed = r.steps_completed;
  out.summary.max_grad_norm = r.max_grad_norm;
  out.summary.spike_count = static_cast<int>(r.spikes.size());
  if (!r.log.empty()) out.summary.final_loss = r.log.back().train_loss;
  out.log = std::move(r.log);
  out.spikes = std::move(r.spikes);
  out.params = cast_parameters<double>(r.params);
  return out;
}

RunOutcome run_with_corpus(const RunConfig& config, const Corpus& corpus, const StepObserver& observer) {
  config.validate();
  return config.train.precision == Precision::Double ? run_typed<double>(config, corpus, observer)
                                                     : run_typed<float>(config, corpus, observer);
}

}  // namespace

RunOutcome run_training(const RunConfig& config, const StepObserver& observer) {
  config.validate();
  const Corpus corpus = make_corpus(config.data);
  return run_with_corpus(config, corpus, observer);
}

BoundReport init_bound_report(const RunConfig& config, std::uint64_t seed) {
  const ModelConfig model = config.model_config();
  const Parameters<double> params = init_parameters<double>(model, config.scheme.init, init_stream(seed));
  RandomSource probe = probe_stream(seed);
  const auto stats = measure_shortcut_stats(params, model, config.bounds.probe_batches, probe);
  return layerwise_bound_report(params, model, stats, config.scheme.name);
}

CompareResult compare_schemes(const RunConfig& base, const CompareOptions& options,
                              const CompareProgress& progress) {
  if (options.schemes.empty()) throw ConfigError("compare: no schemes given");
  if (options.seeds.empty()) throw ConfigError("compare: at least one seed is required");
  base.validate();
  const std::vector<double> lrs = options.lrs.empty() ? std::vector<double>{base.train.lr_peak} : options.lrs;
  const std::vector<int> lens = options.seq_lens.empty() ? std::vector<int>{base.model.seq_len} : options.seq_lens;
  const int budget = base.train.batch_size * base.model.seq_len;
  const Corpus corpus = make_corpus(base.data);

  CompareResult result;
  std::map<std::tuple<std::size_t, std::uint64_t, int>, std::size_t> bound_index;
  for (std::size_t s = 0; s < options.schemes.size(); ++s) {
    for (std::uint64_t seed : options.seeds) {
      for (double lr : lrs) {
        for (int L : lens) {
          CompareRow row;
          row.scheme = options.schemes[s].name;
          row.seed = seed;
          row.lr = lr;
          row.seq_len = L;
          try {
            RunConfig cfg = base;
            cfg.scheme = options.schemes[s];
            cfg.train.seed = seed;
            cfg.train.lr_peak = lr;
            cfg.model.seq_len = L;
            cfg.train.batch_size = options.token_budget ? token_budget_batch_size(budget, L) : base.train.batch_size;
            row.batch_size = cfg.train.batch_size;
            const auto key = std::make_tuple(s, seed, L);
            auto it = bound_index.find(key);
            if (it == bound_index.end()) {
              result.bounds.push_back({row.scheme, seed, L, init_bound_report(cfg, seed)});
              it = bound_index.emplace(key, result.bounds.size() - 1).first;
            }
            const BoundReport& report = result.bounds[it->second].report;
            if (!report.layers.empty()) {
              row.layer1_ffn_bound = report.layers.front().ffn_bound;
              row.layer1_attn_bound = report.layers.front().attn_bound;
            }
            row.summary = run_with_corpus(cfg, corpus, {}).summary;
          } catch (const std::exception& e) {
            row.error = e.what();
          }
          if (progress) progress(row);
          result.rows.push_back(std::move(row));
        }
      }
    }
  }
  return result;
}

void write_compare_csv(std::ostream& out, const CompareResult& result) {
  out << "scheme,seed,lr,seq_len,batch_size,tokens_per_step,status,steps_completed,final_loss,"
         "max_grad_norm,spike_count,diverged_step,layer1_ffn_bound,layer1_attn_bound,error\n";
  for (const auto& r : result.rows) {
    std::string error = r.error;
    for (char& c : error) {
      if (c == ',' || c == '\n') c = ';';
    }
    out << r.scheme << ',' << r.seed << ',' << format_number(r.lr) << ',' << r.seq_len << ','
        << r.batch_size << ',' << r.tokens_per_step() << ','
        << (r.error.empty() ? std::string(to_string(r.summary.status)) : "error") << ','
        << r.summary.steps_completed << ',' << format_number(r.summary.final_loss) << ','
        << format_number(r.summary.max_grad_norm) << ',' << r.summary.spike_count << ','
        << (r.summary.diverged_step ? std::to_string(*r.summary.diverged_step) : "") << ','
        << format_number(r.layer1_ffn_bound) << ',' << format_number(r.layer1_attn_bound) << ','
        << error << '\n';
  }
}

void write_compare_bounds_csv(std::ostream& out, const CompareResult& result) {
  out << "seed,seq_len," << bound_csv_header() << '\n';
  for (const auto& b : result.bounds) {
    for (const auto& row : b.report.layers) {
      out << b.seed << ',' << b.seq_len << ',' << bound_csv_row(row, b.scheme) << '\n';
    }
  }
}

}  // namespace preln
