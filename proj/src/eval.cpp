#include "moelens/eval.hpp"

#include "moelens/corpus.hpp"
#include "moelens/io.hpp"

#include <json.hpp>

#include <cmath>
#include <regex>
#include <sstream>

namespace moelens {

MaskedModel::MaskedModel(const ModelBundle& model, const ExpertPartition& partition, const PruneMask& mask)
    : model_(&model), partition_(&partition), mask_(&mask) {
  check_mask_shape(model.config, partition, mask);
}

MatrixF MaskedModel::logits(std::span<const TokenId> tokens) const {
  if (mask_) return forward_masked(*model_, tokens, *partition_, *mask_);
  return forward(*model_, tokens);
}

std::string MaskedModel::label() const { return mask_ ? mask_->provenance.describe() : "origin"; }

namespace {

/// log softmax(row)[target] in double.
double log_prob(const Eigen::Ref<const Eigen::Matrix<float, 1, Eigen::Dynamic>>& row, TokenId target) {
  const double m = row.maxCoeff();
  double sum = 0;
  for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(static_cast<double>(row(j)) - m);
  return static_cast<double>(row(target)) - m - std::log(sum);
}

const char* metric_name(EvalMetric m) {
  switch (m) {
    case EvalMetric::perplexity:
      return "perplexity";
    case EvalMetric::mcq_accuracy:
      return "mcq_accuracy";
    case EvalMetric::exact_match:
      return "exact_match";
  }
  return "unknown";
}

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse&& parse) {
  std::istringstream in(read_text_file(path));
  std::vector<T> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

}  // namespace

std::string eval_result_to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["metric"] = metric_name(r.metric);
  j["value"] = r.value;
  j["n_samples"] = r.n_samples;
  if (r.metric == EvalMetric::perplexity) j["n_tokens"] = r.n_tokens;
  j["mask"] = r.mask;
  j["language"] = r.language_tag;
  if (!r.predictions.empty()) j["predictions"] = r.predictions;
  if (!r.generations.empty()) j["generations"] = r.generations;
  // Generations from untrained models are arbitrary bytes.
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

SequenceLoss sequence_nll(const MatrixF& logits, std::span<const TokenId> tokens) {
  SequenceLoss loss;
  if (static_cast<size_t>(logits.rows()) != tokens.size()) throw DataError("sequence_nll: logits/token length mismatch");
  for (size_t t = 0; t + 1 < tokens.size(); ++t) {
    loss.nll -= log_prob(logits.row(static_cast<Eigen::Index>(t)), tokens[t + 1]);
    ++loss.count;
  }
  return loss;
}

EvalResult perplexity(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                      int max_tokens, const std::string& language_tag) {
  if (texts.empty()) throw DataError("perplexity: empty corpus");
  const int limit = max_tokens > 0 ? std::min(max_tokens, model.config().max_seq_len) : model.config().max_seq_len;
  EvalResult r;
  r.metric = EvalMetric::perplexity;
  r.mask = model.label();
  r.language_tag = language_tag;
  double nll = 0;
  for (const auto& text : texts) {
    const auto tokens = tokenize_sample(tokenizer, text, limit);
    const SequenceLoss loss = sequence_nll(model.logits(tokens), tokens);
    nll += loss.nll;
    r.n_tokens += loss.count;
    ++r.n_samples;
  }
  if (r.n_tokens == 0) throw DataError("perplexity: corpus has no predictable tokens");
  r.value = std::exp(nll / static_cast<double>(r.n_tokens));
  return r;
}

std::vector<McqItem> read_mcq_items(const std::filesystem::path& path) {
  return read_jsonl<McqItem>(path, [](const nlohmann::json& j) {
    McqItem item{j.at("question").get<std::string>(), j.at("options").get<std::vector<std::string>>(),
                 j.at("answer").get<int>()};
    if (item.options.size() < 2) throw DataError("mcq item needs at least two options");
    if (item.answer < 0 || item.answer >= static_cast<int>(item.options.size()))
      throw DataError("mcq answer index out of range");
    return item;
  });
}

std::string write_mcq_items(std::span<const McqItem> items) {
  std::string out;
  for (const auto& item : items) {
    nlohmann::ordered_json j{{"question", item.question}, {"options", item.options}, {"answer", item.answer}};
    out += j.dump() + "\n";
  }
  return out;
}

EvalResult mcq_accuracy(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const McqItem> items,
                        McqScoring scoring, const std::string& language_tag) {
  if (items.empty()) throw DataError("mcq: no items");
  EvalResult r;
  r.metric = EvalMetric::mcq_accuracy;
  r.mask = model.label();
  r.language_tag = language_tag;
  const size_t ctx = static_cast<size_t>(model.config().max_seq_len);
  int correct = 0;
  for (const auto& item : items) {
    if (item.options.empty()) throw DataError("mcq: item has no options");
    const auto prompt = tokenize_sample(tokenizer, item.question, 0);
    int best = -1;
    double best_score = 0;
    for (size_t o = 0; o < item.options.size(); ++o) {
      const auto option = tokenizer.encode(item.options[o]);
      if (option.empty()) throw DataError("mcq: option " + std::to_string(o) + " encodes to no tokens");
      if (option.size() + 1 > ctx) throw DataError("mcq: option longer than the model context");
      std::vector<TokenId> seq(prompt.begin(), prompt.end());
      if (seq.size() + option.size() > ctx) seq.erase(seq.begin(), seq.begin() + (seq.size() + option.size() - ctx));
      const size_t start = seq.size();
      seq.insert(seq.end(), option.begin(), option.end());
      const MatrixF logits = model.logits(seq);
      double score = 0;
      for (size_t t = start; t < seq.size(); ++t) score += log_prob(logits.row(static_cast<Eigen::Index>(t - 1)), seq[t]);
      if (scoring == McqScoring::length_normalized) score /= static_cast<double>(option.size());
      if (best < 0 || score > best_score) {
        best = static_cast<int>(o);
        best_score = score;
      }
    }
    r.predictions.push_back(best);
    if (best == item.answer) ++correct;
    ++r.n_samples;
  }
  r.value = static_cast<double>(correct) / static_cast<double>(r.n_samples);
  return r;
}

std::vector<GenItem> read_gen_items(const std::filesystem::path& path) {
  return read_jsonl<GenItem>(path, [](const nlohmann::json& j) {
    const auto& a = j.at("answer");
    return GenItem{j.at("prompt").get<std::string>(), a.is_string() ? a.get<std::string>() : a.dump()};
  });
}

std::string write_gen_items(std::span<const GenItem> items) {
  std::string out;
  for (const auto& item : items) out += nlohmann::ordered_json{{"prompt", item.prompt}, {"answer", item.answer}}.dump() + "\n";
  return out;
}

std::string extract_answer(const std::string& text) {
  static const std::regex number(R"([-+]?[0-9]+(\.[0-9]+)?)");
  std::string last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), number); it != std::sregex_iterator(); ++it)
    last = it->str();
  if (last.empty()) return last;
  if (last.front() == '+') last.erase(0, 1);
  if (const auto dot = last.find('.'); dot != std::string::npos) {
    while (last.back() == '0') last.pop_back();
    if (last.back() == '.') last.pop_back();
  }
  if (last.find_first_not_of("-0") == std::string::npos) last = "0";
  return last;
}

std::vector<TokenId> greedy_decode(const MaskedModel& model, std::vector<TokenId> seq, int max_new_tokens) {
  std::vector<TokenId> generated;
  const size_t ctx = static_cast<size_t>(model.config().max_seq_len);
  for (int step = 0; step < max_new_tokens && seq.size() < ctx; ++step) {
    const MatrixF logits = model.logits(seq);
    Eigen::Index next = 0;
    logits.row(logits.rows() - 1).maxCoeff(&next);
    if (next == Tokenizer::kEos) break;
    generated.push_back(static_cast<TokenId>(next));
    seq.push_back(static_cast<TokenId>(next));
  }
  return generated;
}

EvalResult exact_match(const MaskedModel& model, const Tokenizer& tokenizer, std::span<const GenItem> items,
                       int max_new_tokens, const std::string& language_tag) {
  if (items.empty()) throw DataError("exact match: no items");
  EvalResult r;
  r.metric = EvalMetric::exact_match;
  r.mask = model.label();
  r.language_tag = language_tag;
  const int ctx = model.config().max_seq_len;
  int correct = 0;
  for (const auto& item : items) {
    auto prompt = tokenize_sample(tokenizer, item.prompt, 0);
    if (static_cast<int>(prompt.size()) >= ctx) prompt.erase(prompt.begin(), prompt.end() - (ctx - 1));
    const std::string text = tokenizer.decode(greedy_decode(model, std::move(prompt), max_new_tokens));
    const std::string want = extract_answer(item.answer);
    const std::string got = extract_answer(text);
    if (!got.empty() && got == want) ++correct;
    r.generations.push_back(text);
    ++r.n_samples;
  }
  r.value = static_cast<double>(correct) / static_cast<double>(r.n_samples);
  return r;
}

}  // namespace moelens
