#include "preln/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace preln {

std::vector<int> byte_tokenize(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string byte_detokenize(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= kByteVocab) throw std::out_of_range("byte_detokenize: id out of byte range");
    out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

std::string_view to_string(CorpusKind k) {
  switch (k) {
    case CorpusKind::RepeatingPattern: return "repeating-pattern";
    case CorpusKind::SeededMarkov: return "seeded-markov";
    case CorpusKind::File: return "file";
  }
  return "?";
}

CorpusKind parse_corpus_kind(std::string_view s) {
  for (auto k : {CorpusKind::RepeatingPattern, CorpusKind::SeededMarkov, CorpusKind::File}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown corpus kind '" + std::string(s) + "'");
}

namespace {

Corpus repeating_pattern(std::size_t length, RandomSource& rng, const CorpusOptions& opt) {
  if (opt.period < 1 || opt.period > 95) throw std::invalid_argument("pattern period must be in [1, 95]");
  if (!(opt.noise >= 0.0 && opt.noise <= 1.0)) throw std::invalid_argument("noise must be in [0, 1]");
  // printable ASCII, shuffled; the template is the first `period` of them
  std::vector<std::uint8_t> pool(95);
  std::iota(pool.begin(), pool.end(), std::uint8_t{32});
  for (std::size_t i = pool.size() - 1; i > 0; --i) {
    std::swap(pool[i], pool[rng.uniform_int(i + 1)]);
  }
  Corpus c;
  c.source = "repeating-pattern";
  c.bytes.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    c.bytes[i] = pool[i % static_cast<std::size_t>(opt.period)];
    if (opt.noise > 0.0 && rng.uniform() < opt.noise) {
      c.bytes[i] = static_cast<std::uint8_t>(rng.uniform_int(256));
    }
  }
  return c;
}

Corpus seeded_markov(std::size_t length, RandomSource& rng) {
  constexpr int kAlphabet = 64;
  constexpr int kFanout = 4;
  std::array<std::uint8_t, kAlphabet> symbols{};
  for (int i = 0; i < kAlphabet; ++i) symbols[i] = static_cast<std::uint8_t>(48 + i);
  // successors[a][b] lists the symbols allowed after the pair (a, b)
  std::vector<std::array<int, kFanout>> successors(kAlphabet * kAlphabet);
  for (auto& s : successors) {
    for (auto& v : s) v = static_cast<int>(rng.uniform_int(kAlphabet));
  }
  Corpus c;
  c.source = "seeded-markov";
  c.bytes.resize(length);
  int a = static_cast<int>(rng.uniform_int(kAlphabet));
  int b = static_cast<int>(rng.uniform_int(kAlphabet));
  for (std::size_t i = 0; i < length; ++i) {
    const int next = successors[static_cast<std::size_t>(a * kAlphabet + b)][rng.uniform_int(kFanout)];
    c.bytes[i] = symbols[static_cast<std::size_t>(next)];
    a = b;
    b = next;
  }
  return c;
}

}  // namespace

Corpus synthetic_corpus(CorpusKind kind, std::size_t length, RandomSource& rng,
                        const CorpusOptions& options) {
  if (length == 0) throw std::invalid_argument("synthetic_corpus: length must be positive");
  switch (kind) {
    case CorpusKind::RepeatingPattern: return repeating_pattern(length, rng, options);
    case CorpusKind::SeededMarkov: return seeded_markov(length, rng);
    case CorpusKind::File: break;
  }
  throw std::invalid_argument("synthetic_corpus: file corpora are loaded, not generated");
}

Corpus load_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  Corpus c;
  c.source = path.string();
  c.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (c.bytes.empty()) throw std::runtime_error("corpus file " + path.string() + " is empty");
  return c;
}

Corpus make_corpus(const DataConfig& config) {
  if (config.kind == CorpusKind::File) return load_corpus_file(config.path);
  RandomSource rng(config.seed);
  return synthetic_corpus(config.kind, config.length, rng, {config.noise, config.period});
}

BatchStream::BatchStream(const Corpus& corpus, int batch_size, int seq_len, RandomSource rng)
    : corpus_(&corpus), batch_size_(batch_size), seq_len_(seq_len), rng_(std::move(rng)) {
  if (batch_size < 1 || seq_len < 1) throw std::invalid_argument("BatchStream: sizes must be positive");
  if (corpus.bytes.size() < static_cast<std::size_t>(seq_len) + 1) {
    throw std::invalid_argument("BatchStream: corpus shorter than L + 1");
  }
}

Batch BatchStream::next() {
  Batch b;
  b.inputs.resize(batch_size_, seq_len_);
  b.targets.resize(batch_size_, seq_len_);
  const std::size_t starts = corpus_->bytes.size() - static_cast<std::size_t>(seq_len_);
  for (int r = 0; r < batch_size_; ++r) {
    const std::size_t s = rng_.uniform_int(starts);
    for (int t = 0; t < seq_len_; ++t) {
      b.inputs(r, t) = corpus_->bytes[s + static_cast<std::size_t>(t)];
      b.targets(r, t) = corpus_->bytes[s + static_cast<std::size_t>(t) + 1];
    }
  }
  return b;
}

int token_budget_batch_size(int tokens_per_step, int seq_len) {
  if (tokens_per_step < 1 || seq_len < 1) throw std::invalid_argument("token budget: sizes must be positive");
  if (tokens_per_step % seq_len != 0) {
    throw std::invalid_argument("token budget " + std::to_string(tokens_per_step) +
                                " is not a multiple of L = " + std::to_string(seq_len));
  }
  return tokens_per_step / seq_len;
}

}  // namespace preln
