#include "preln/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "preln/format.hpp"

namespace preln {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(std::string_view s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(s) + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
  std::function<bool()> present = [] { return true; };
};

std::vector<Field> model_fields(ModelConfig& m, bool with_embed) {
  std::vector<Field> f = {
      {"num_layers", [&](auto v) { m.num_layers = parse_integer<int>(v); }, [&] { return std::to_string(m.num_layers); }},
      {"d", [&](auto v) { m.d = parse_integer<int>(v); }, [&] { return std::to_string(m.d); }},
      {"d_ffn", [&](auto v) { m.d_ffn = parse_integer<int>(v); }, [&] { return std::to_string(m.d_ffn); }},
      {"num_heads", [&](auto v) { m.num_heads = parse_integer<int>(v); }, [&] { return std::to_string(m.num_heads); }},
      {"seq_len", [&](auto v) { m.seq_len = parse_integer<int>(v); }, [&] { return std::to_string(m.seq_len); }},
      {"vocab_size", [&](auto v) { m.vocab_size = parse_integer<int>(v); }, [&] { return std::to_string(m.vocab_size); }},
      {"activation", [&](auto v) { m.activation = parse_activation(v); }, [&] { return std::string(to_string(m.activation)); }},
      {"norm", [&](auto v) { m.norm = parse_norm_kind(v); }, [&] { return std::string(to_string(m.norm)); }},
      {"causal", [&](auto v) { m.causal = parse_bool(v); }, [&] { return bool_text(m.causal); }},
      {"dropout", [&](auto v) { m.dropout = parse_number(v); }, [&] { return format_number(m.dropout); }},
      {"positional", [&](auto v) { m.positional = parse_positional(v); }, [&] { return std::string(to_string(m.positional)); }},
  };
  if (with_embed) {
    EmbedMode& e = m.embed_mode;
    f.push_back({"embed", [&](auto v) { e.kind = parse_embed_kind(v); }, [&] { return std::string(to_string(e.kind)); }});
    f.push_back({"embed_factor", [&](auto v) { e.factor = parse_number(v); },
                 [&] { return format_number(e.factor.value_or(0.0)); }, [&] { return e.factor.has_value(); }});
    f.push_back({"detach_gamma", [&](auto v) { e.gamma = parse_number(v); }, [&] { return format_number(e.gamma); }});
  }
  return f;
}

std::vector<Field> run_fields(RunConfig& c) {
  std::vector<Field> f;
  for (auto& m : model_fields(c.model, false)) {
    m.key = "model." + m.key;
    f.push_back(std::move(m));
  }
  SchemeSpec& s = c.scheme;
  f.push_back({"scheme.name",
               [&](auto v) {
                 if (auto b = builtin_scheme(v)) {
                   s = *b;
                 } else {
                   s.name = std::string(v);
                 }
               },
               [&] { return s.name; }});
  f.push_back({"scheme.init", [&](auto v) { s.init = parse_initializer(v); }, [&] { return std::string(to_string(s.init)); }});
  f.push_back({"scheme.embed", [&](auto v) { s.embed.kind = parse_embed_kind(v); }, [&] { return std::string(to_string(s.embed.kind)); }});
  f.push_back({"scheme.embed_factor", [&](auto v) { s.embed.factor = parse_number(v); },
               [&] { return format_number(s.embed.factor.value_or(0.0)); }, [&] { return s.embed.factor.has_value(); }});
  f.push_back({"scheme.detach_gamma", [&](auto v) { s.embed.gamma = parse_number(v); }, [&] { return format_number(s.embed.gamma); }});

  TrainConfig& t = c.train;
  auto num = [&](const char* key, double& ref) {
    f.push_back({key, [&ref](auto v) { ref = parse_number(v); }, [&ref] { return format_number(ref); }});
  };
  auto integer = [&](const char* key, int& ref) {
    f.push_back({key, [&ref](auto v) { ref = parse_integer<int>(v); }, [&ref] { return std::to_string(ref); }});
  };
  num("train.lr_peak", t.lr_peak);
  num("train.warmup_fraction", t.warmup_fraction);
  integer("train.total_steps", t.total_steps);
  integer("train.batch_size", t.batch_size);
  num("train.adam_beta1", t.adam_beta1);
  num("train.adam_beta2", t.adam_beta2);
  num("train.adam_eps", t.adam_eps);
  num("train.weight_decay", t.weight_decay);
  num("train.clip_norm", t.clip_norm);
  f.push_back({"train.seed", [&](auto v) { t.seed = parse_integer<std::uint64_t>(v); }, [&] { return std::to_string(t.seed); }});
  f.push_back({"train.precision", [&](auto v) { t.precision = parse_precision(v); }, [&] { return std::string(to_string(t.precision)); }});
  integer("train.log_every", t.log_every);
  integer("train.spike_window", t.spike_window);
  num("train.spike_factor", t.spike_factor);
  f.push_back({"train.record_wall_time", [&](auto v) { t.record_wall_time = parse_bool(v); }, [&] { return bool_text(t.record_wall_time); }});

  DataConfig& d = c.data;
  f.push_back({"data.kind", [&](auto v) { d.kind = parse_corpus_kind(v); }, [&] { return std::string(to_string(d.kind)); }});
  f.push_back({"data.length", [&](auto v) { d.length = parse_integer<std::size_t>(v); }, [&] { return std::to_string(d.length); }});
  f.push_back({"data.path", [&](auto v) { d.path = std::string(v); }, [&] { return d.path; }, [&] { return !d.path.empty(); }});
  f.push_back({"data.seed", [&](auto v) { d.seed = parse_integer<std::uint64_t>(v); }, [&] { return std::to_string(d.seed); }});
  num("data.noise", d.noise);
  integer("data.period", d.period);

  BoundsConfig& b = c.bounds;
  integer("bounds.probe_batches", b.probe_batches);
  integer("bounds.probe_seq_len", b.probe_seq_len);
  integer("bounds.layers", b.layers);
  f.push_back({"bounds.precision", [&](auto v) { b.precision = parse_precision(v); }, [&] { return std::string(to_string(b.precision)); }});

  f.push_back({"output.dir", [&](auto v) { c.output_dir = std::string(v); }, [&] { return c.output_dir; }});
  return f;
}

void set_in(std::vector<Field>& fields, std::string_view key, std::string_view value) {
  for (auto& f : fields) {
    if (f.key == key) {
      try {
        f.set(value);
      } catch (const std::exception& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    model_config().validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (bounds.probe_batches < 1) throw ConfigError("bounds.probe_batches must be >= 1");
  if (bounds.probe_seq_len < 0) throw ConfigError("bounds.probe_seq_len must be >= 0");
  if (bounds.layers < 0) throw ConfigError("bounds.layers must be >= 0");
  if (data.kind == CorpusKind::File && data.path.empty()) throw ConfigError("data.path is required for file corpora");
  if (data.kind != CorpusKind::File && data.length < 2 * static_cast<std::size_t>(model.seq_len)) {
    throw ConfigError("data.length must be at least 2 x model.seq_len");
  }
  if (model.vocab_size < kByteVocab) throw ConfigError("model.vocab_size must cover the 256 byte ids");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  auto fields = run_fields(config);
  set_in(fields, key, value);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_run_config(std::string_view text, const RunConfig& base) {
  RunConfig c = base;
  auto fields = run_fields(c);
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_in(fields, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  for (const auto& f : run_fields(copy)) {
    if (f.present()) out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& config) {
  ModelConfig copy = config;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : model_fields(copy, true)) {
    if (f.present()) out.emplace_back(f.key, f.get());
  }
  return out;
}

void set_model_config_value(ModelConfig& config, std::string_view key, std::string_view value) {
  auto fields = model_fields(config, true);
  set_in(fields, key, value);
}

std::vector<std::string> split_list(std::string_view csv) {
  std::vector<std::string> out;
  while (!csv.empty()) {
    const auto comma = csv.find(',');
    const auto item = trim(csv.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    csv = csv.substr(comma + 1);
  }
  return out;
}

}  // namespace preln
