#pragma once

#include "moelens/decoder.hpp"
#include "moelens/tokenizer.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace moelens {

/// A dense model, optionally restricted to the experts a mask keeps.
class MaskedModel {
 public:
  explicit MaskedModel(const ModelBundle& model) : model_(&model) {}
  MaskedModel(const ModelBundle& model, const ExpertPartition& partition, const PruneMask& mask);

  MatrixF logits(std::span<const TokenId> tokens) const;
  const ModelConfig& config() const { return model_->config; }
  /// "origin" without a mask, else the mask provenance.
  std::string label() const;

 private:
  const ModelBundle* model_;
  const ExpertPartition* partition_ = nullptr;
  const PruneMask* mask_ = nullptr;
};

enum class EvalMetric { perplexity, mcq_accuracy, exact_match };

struct EvalResult {
  EvalMetric metric = EvalMetric::perplexity;
  double value = 0;
  std::int64_t n_samples = 0;
  std::int64_t n_tokens = 0;  // perplexity: predicted tokens
  std::string mask = "origin";
  std::string language_tag;
  std::vector<int> predictions;          // mcq: chosen option per item
  std::vector<std::string> generations;  // exact match: decoded output per item
};

std::string eval_result_to_json(const EvalResult& result);

struct SequenceLoss {
  double nll = 0;  // summed negative log-likelihood of tokens[1..]
  std::int64_t count = 0;
};

/// Teacher-forced loss of tokens[t+1] under logits row t.
SequenceLoss sequence_nll(const MatrixF& logits, std::span<const TokenId> tokens);

/// exp(token-weighted mean NLL) over all samples (BOS + text, truncated to
/// max_tokens and the model's max_seq_len).
EvalResult perplexity(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                      int max_tokens, const std::string& language_tag = "und");

struct McqItem {
  std::string question;
  std::vector<std::string> options;
  int answer = 0;
};

enum class McqScoring { length_normalized, raw_sum };

std::vector<McqItem> read_mcq_items(const std::filesystem::path& path);
std::string write_mcq_items(std::span<const McqItem> items);

/// Each option is scored by the log-likelihood of its tokens following
/// BOS + question (mean per token by default). Ties pick the lowest index.
EvalResult mcq_accuracy(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const McqItem> items,
                        McqScoring scoring = McqScoring::length_normalized, const std::string& language_tag = "und");

struct GenItem {
  std::string prompt;
  std::string answer;
};

std::vector<GenItem> read_gen_items(const std::filesystem::path& path);
std::string write_gen_items(std::span<const GenItem> items);

/// Last signed/decimal digit run in `text`, normalized (no leading '+',
/// no trailing fractional zeros). Empty when there is none.
std::string extract_answer(const std::string& text);

/// Greedy continuation of BOS + prompt until EOS, max_new_tokens or the
/// context limit. Ties pick the lowest token id.
std::vector<TokenId> greedy_decode(const MaskedModel& model, std::vector<TokenId> prompt, int max_new_tokens);

EvalResult exact_match(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const GenItem> items,
                       int max_new_tokens, const std::string& language_tag = "und");

}  // namespace moelens
