#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "preln/numerics.hpp"
#include "preln/random.hpp"

namespace preln {

inline constexpr int kByteVocab = 256;

std::vector<int> byte_tokenize(std::string_view text);
std::string byte_detokenize(std::span<const int> ids);  // ids must be < 256

enum class CorpusKind { RepeatingPattern, SeededMarkov, File };

std::string_view to_string(CorpusKind k);
CorpusKind parse_corpus_kind(std::string_view s);

struct Corpus {
  std::vector<std::uint8_t> bytes;
  std::string source;
};

struct CorpusOptions {
  double noise = 0.05;  // repeating-pattern: chance a byte is replaced by a random one
  int period = 32;      // repeating-pattern template length
};

// Generated corpora for toy language modelling. Both kinds are learnable by a
// two-layer model: a noisy cyclic template, or an order-2 byte chain with a
// sparse random transition table.
Corpus synthetic_corpus(CorpusKind kind, std::size_t length, RandomSource& rng,
                        const CorpusOptions& options = {});

Corpus load_corpus_file(const std::filesystem::path& path);

struct DataConfig {
  CorpusKind kind = CorpusKind::RepeatingPattern;
  std::size_t length = 200000;
  std::string path;  // File kind only
  std::uint64_t seed = 1;
  double noise = 0.05;
  int period = 32;

  bool operator==(const DataConfig&) const = default;
};

Corpus make_corpus(const DataConfig& config);

struct Batch {
  Matrix<int> inputs;   // batch x L
  Matrix<int> targets;  // inputs shifted by one position
};

// Random contiguous windows, sampled with replacement.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, int batch_size, int seq_len, RandomSource rng);

  Batch next();
  int batch_size() const { return batch_size_; }
  int seq_len() const { return seq_len_; }

 private:
  const Corpus* corpus_;
  int batch_size_;
  int seq_len_;
  RandomSource rng_;
};

// Batch size that keeps batch x L equal to `tokens_per_step`.
int token_budget_batch_size(int tokens_per_step, int seq_len);

}  // namespace preln
