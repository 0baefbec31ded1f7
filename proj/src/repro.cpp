#include "moelens/repro.hpp"

#include "moelens/analysis.hpp"
#include "moelens/corpus.hpp"
#include "moelens/eval.hpp"
#include "moelens/expert_split.hpp"
#include "moelens/io.hpp"
#include "moelens/manifest.hpp"
#include "moelens/mltb.hpp"
#include "moelens/profiler.hpp"
#include "moelens/pruning.hpp"
#include "moelens/render.hpp"
#include "moelens/toy.hpp"
#include "moelens/train.hpp"

#include <algorithm>
#include <iostream>
#include <optional>

namespace moelens {

namespace fs = std::filesystem;

namespace {

// Fixture sizes. E=32 over d_ff=128 gives 4 neurons per expert.
constexpr int kTrainSamples = 400;
constexpr int kProfileSamples = 300;
constexpr int kEvalSamples = 50;
constexpr int kWordsPerSample = 10;
constexpr int kTaskItems = 40;
constexpr int kExperts = 32;
constexpr double kKeptProportion = 0.8;
constexpr double kTopPercent = 80;
constexpr double kSharedTau = 0.05;
constexpr int kTuneSteps = 100;
constexpr int kRandomSeeds = 3;

ModelConfig fixture_config() { return ModelConfig{4, 32, 128, 4, Tokenizer::kByteVocab, 64}; }

class Run {
 public:
  explicit Run(fs::path root) : root_(std::move(root)) {}

  fs::path at(const std::string& rel) const { return root_ / rel; }

  // Records a manifest beside the first output; `command` is the equivalent CLI invocation.
  void emit(std::vector<std::string> command, nlohmann::ordered_json config, std::map<std::string, std::uint64_t> seeds,
            const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    RunManifest m{std::move(command), std::move(config), std::move(seeds), {}, {}};
    for (const auto& i : inputs) m.inputs.push_back(at(i));
    for (const auto& o : outputs) {
      m.outputs.push_back(at(o));
      artifacts.push_back(at(o));
    }
    artifacts.push_back(write_manifest(m, at(outputs.front())));
  }

  std::vector<fs::path> artifacts;

 private:
  fs::path root_;
};

std::vector<std::vector<TokenId>> tokenize_all(const Tokenizer& tok, const std::vector<std::string>& texts, int max_tokens) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tokenize_sample(tok, t, max_tokens));
  return out;
}

nlohmann::ordered_json config_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},         {"d_ff", c.d_ff},
          {"n_heads", c.n_heads},   {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}};
}

}  // namespace

ReproResult run_repro(const ReproOptions& options) {
  if (options.fixture != "toy-bilingual") throw DataError("repro: unknown fixture '" + options.fixture + "'");
  if (options.train_steps < 1) throw DataError("repro: train_steps must be positive");
  const std::uint64_t seed = options.seed;
  Run run(options.out_dir);
  const Tokenizer tok;
  const ModelConfig cfg = fixture_config();
  const auto langs = bilingual_languages(seed);

  // Corpora and task fixtures.
  std::map<std::string, std::vector<std::string>> profile_texts, eval_texts;
  std::vector<std::vector<TokenId>> mixture;
  std::vector<std::vector<TokenId>> la_only;
  for (size_t l = 0; l < langs.size(); ++l) {
    const auto& lang = langs[l];
    const std::uint64_t s = seed * 64 + l * 8;
    const auto train_texts = synthetic_corpus(lang, kTrainSamples, kWordsPerSample, s + 1);
    profile_texts[lang.tag] = synthetic_corpus(lang, kProfileSamples, kWordsPerSample, s + 2);
    eval_texts[lang.tag] = synthetic_corpus(lang, kEvalSamples, kWordsPerSample, s + 3);
    const auto mcq = synthetic_mcq(lang, kTaskItems, s + 4);
    const auto gen = synthetic_gen(lang, kTaskItems, s + 5);
    const std::string base = "corpus/" + lang.tag;
    write_text_file(run.at(base + ".train.jsonl"), write_text_corpus(train_texts));
    write_text_file(run.at(base + ".profile.jsonl"), write_text_corpus(profile_texts[lang.tag]));
    write_text_file(run.at(base + ".eval.jsonl"), write_text_corpus(eval_texts[lang.tag]));
    write_text_file(run.at(base + ".mcq.jsonl"), write_mcq_items(mcq));
    write_text_file(run.at(base + ".gen.jsonl"), write_gen_items(gen));
    run.emit({"gen-toy", "--corpus", lang.tag},
             {{"language", lang.tag},
              {"train_samples", kTrainSamples},
              {"profile_samples", kProfileSamples},
              {"eval_samples", kEvalSamples},
              {"words_per_sample", kWordsPerSample},
              {"task_items", kTaskItems}},
             {{"corpus", s}}, {},
             {base + ".train.jsonl", base + ".profile.jsonl", base + ".eval.jsonl", base + ".mcq.jsonl",
              base + ".gen.jsonl"});
    auto toks = tokenize_all(tok, train_texts, cfg.max_seq_len);
    if (l == 0) la_only = toks;
    mixture.insert(mixture.end(), toks.begin(), toks.end());
  }
  const std::string la = langs[0].tag, lb = langs[1].tag;

  // Models: base trained on the mixture, tuned = base further trained on la.
  std::cerr << "repro: training base model\n";
  ModelBundle base = random_model(cfg, seed);
  TrainConfig tc;
  tc.steps = options.train_steps;
  tc.seed = seed;
  const auto base_report = train(base, mixture, tc);
  save_model(base, run.at("models/base.mltb"));
  run.emit({"gen-toy", "--seed", std::to_string(seed), "--train-steps", std::to_string(tc.steps), "--out",
            "models/base.mltb"},
           config_json(cfg), {{"model", seed}, {"train", seed}},
           {"corpus/" + la + ".train.jsonl", "corpus/" + lb + ".train.jsonl"}, {"models/base.mltb"});

  std::cerr << "repro: tuning on " << la << "\n";
  ModelBundle tuned = base;
  TrainConfig tune = tc;
  tune.steps = kTuneSteps;
  tune.learning_rate = tc.learning_rate / 3;
  tune.seed = seed + 1;
  const auto tune_report = train(tuned, la_only, tune);
  save_model(tuned, run.at("models/tuned.mltb"));
  run.emit({"train", "--from", "models/base.mltb", "--steps", std::to_string(tune.steps), "--out", "models/tuned.mltb"},
           {{"steps", tune.steps}, {"lr", tune.learning_rate}, {"language", la}}, {{"train", tune.seed}},
           {"models/base.mltb", "corpus/" + la + ".train.jsonl"}, {"models/tuned.mltb"});

  // Split.
  ClusterConfig cc;
  cc.n_experts = kExperts;
  cc.seed = seed;
  const ExpertPartition partition = split_model(base, cc, options.workers);
  save_partition(partition, run.at("partition.json"));
  run.emit({"split", "--model", "models/base.mltb", "--experts", std::to_string(kExperts), "--seed",
            std::to_string(seed), "--out", "partition.json"},
           {{"experts", kExperts}, {"max_iter", cc.max_iterations}, {"init", "kmeans++"}, {"standardize", false}},
           {{"split", seed}}, {"models/base.mltb"}, {"partition.json"});

  // Profile.
  std::map<std::string, FrequencyMatrix> freq;
  auto profile = [&](const ModelBundle& model, const std::string& model_id, const std::string& lang) {
    ProfileConfig pc;
    pc.language_tag = lang;
    pc.model_id = model_id;
    pc.max_tokens_per_sample = cfg.max_seq_len;
    pc.workers = options.workers;
    const std::string out = "freq/" + model_id + "." + lang + ".freq";
    FrequencyMatrix f = profile_corpus(model, partition, tokenize_all(tok, profile_texts[lang], 0), pc);
    save_frequency(f, run.at(out));
    run.emit({"profile", "--model", "models/" + model_id + ".mltb", "--partition", "partition.json", "--corpus",
              "corpus/" + lang + ".profile.jsonl", "--lang", lang, "--max-tokens", std::to_string(pc.max_tokens_per_sample),
              "--out", out},
             {{"lang", lang}, {"topk", f.top_k}, {"max_tokens", pc.max_tokens_per_sample}, {"model_id", model_id}}, {},
             {"models/" + model_id + ".mltb", "partition.json", "corpus/" + lang + ".profile.jsonl"}, {out});
    freq[model_id + "." + lang] = std::move(f);
  };
  std::cerr << "repro: profiling\n";
  profile(base, "base", la);
  profile(base, "base", lb);
  profile(tuned, "tuned", la);

  // Analyze.
  const std::vector<FrequencyMatrix> langs_freq{freq.at("base." + la), freq.at("base." + lb)};
  const std::vector<std::string> freq_files{"freq/base." + la + ".freq", "freq/base." + lb + ".freq"};
  const SimilarityReport report = similarity_report(langs_freq);
  write_text_file(run.at("analysis/similarity.json"), similarity_to_json(report));
  run.emit({"analyze", "similarity", freq_files[0], freq_files[1], "--out", "analysis/similarity.json"},
           {{"metric", "similarity"}}, {}, freq_files, {"analysis/similarity.json"});
  const SharedExpertMap shared = shared_expert_map(langs_freq, kSharedTau);
  write_text_file(run.at("analysis/shared.grid"), shared_map_to_text(shared));
  run.emit({"analyze", "shared", "--tau", format_real(kSharedTau), freq_files[0], freq_files[1], "--out",
            "analysis/shared.grid"},
           {{"tau", kSharedTau}}, {}, freq_files, {"analysis/shared.grid"});
  const DiffMatrix diff = diff_matrix(freq.at("base." + la), freq.at("tuned." + la));
  write_text_file(run.at("analysis/diff.grid"), diff_to_text(diff));
  run.emit({"analyze", "diff", freq_files[0], "freq/tuned." + la + ".freq", "--out", "analysis/diff.grid"},
           {{"metric", "diff"}}, {}, {freq_files[0], "freq/tuned." + la + ".freq"}, {"analysis/diff.grid"});

  // Prune and evaluate per language.
  std::cerr << "repro: pruning and evaluation\n";
  nlohmann::ordered_json summary;
  summary["fixture"] = options.fixture;
  summary["seed"] = seed;
  summary["model"] = config_json(cfg);
  summary["parameters"] = base.parameter_count();
  summary["experts"] = kExperts;
  summary["train_loss"] = {base_report.losses.front(), base_report.losses.back()};
  summary["tune_loss"] = {tune_report.losses.front(), tune_report.losses.back()};
  summary["similarity"] = nlohmann::ordered_json::parse(similarity_to_json(report));
  summary["languages"] = nlohmann::ordered_json::object();

  auto evaluate = [&](const std::string& lang, const std::string& kind, const std::string& mask_file,
                      const std::optional<PruneMask>& mask, const std::string& label) {
    const MaskedModel target = mask ? MaskedModel(base, partition, *mask) : MaskedModel(base);
    EvalResult r;
    std::string data;
    if (kind == "ppl") {
      data = "corpus/" + lang + ".eval.jsonl";
      r = perplexity(target, tok, eval_texts[lang], cfg.max_seq_len, lang);
    } else if (kind == "mcq") {
      data = "corpus/" + lang + ".mcq.jsonl";
      r = mcq_accuracy(target, tok, read_mcq_items(run.at(data)), McqScoring::length_normalized, lang);
    } else {
      data = "corpus/" + lang + ".gen.jsonl";
      r = exact_match(target, tok, read_gen_items(run.at(data)), 8, lang);
    }
    const std::string out = "eval/" + lang + "." + label + "." + kind + ".json";
    write_text_file(run.at(out), eval_result_to_json(r));
    std::vector<std::string> cmd{"eval", kind, "--model", "models/base.mltb", "--data", data, "--lang", lang};
    std::vector<std::string> inputs{"models/base.mltb", data};
    if (mask) {
      cmd.insert(cmd.end(), {"--partition", "partition.json", "--mask", mask_file});
      inputs.insert(inputs.end(), {"partition.json", mask_file});
    }
    cmd.insert(cmd.end(), {"--out", out});
    run.emit(cmd, {{"metric", kind}, {"lang", lang}}, {}, inputs, {out});
    return r.value;
  };

  for (const std::string& lang : {la, lb}) {
    const FrequencyMatrix& f = freq.at("base." + lang);
    const std::string ffile = "freq/base." + lang + ".freq";
    const double tau = tau_for_kept_proportion(f.frequencies(), kKeptProportion);
    const PruneMask threshold = mask_by_threshold(f, tau);
    const std::string th_file = "masks/" + lang + ".threshold.mask";
    save_mask(threshold, run.at(th_file));
    run.emit({"prune", "threshold", "--freq", ffile, "--tau", format_real(tau), "--out", th_file}, {{"tau", tau}}, {},
             {ffile}, {th_file});

    const PruneMask top = mask_by_top_percent(f, kTopPercent);
    const std::string top_file = "masks/" + lang + ".top80.mask";
    save_mask(top, run.at(top_file));
    run.emit({"prune", "top", "--freq", ffile, "--percent", format_real(kTopPercent), "--out", top_file},
             {{"percent", kTopPercent}}, {}, {ffile}, {top_file});

    const FlopsEstimate fl = estimate_flops(cfg, threshold, cfg.max_seq_len);
    const std::string fl_file = "masks/" + lang + ".threshold.flops.json";
    nlohmann::ordered_json flj{{"dense_flops_per_token", fl.dense_flops},
                               {"pruned_flops_per_token", fl.pruned_flops},
                               {"ffn_param_reduction", fl.ffn_param_reduction},
                               {"total_flops_reduction", fl.total_flops_reduction},
                               {"seq_len", cfg.max_seq_len}};
    write_text_file(run.at(fl_file), flj.dump(2) + "\n");
    run.emit({"prune", "flops", "--model", "models/base.mltb", "--mask", th_file, "--seq-len",
              std::to_string(cfg.max_seq_len), "--out", fl_file},
             {{"seq_len", cfg.max_seq_len}}, {}, {"models/base.mltb", th_file}, {fl_file});

    nlohmann::ordered_json entry;
    entry["tau"] = tau;
    entry["kept_proportion"] = threshold.kept_proportion();
    entry["top80_kept_proportion"] = top.kept_proportion();
    entry["flops"] = flj;
    for (const std::string kind : {"ppl", "mcq", "gen"}) {
      nlohmann::ordered_json m;
      m["origin"] = evaluate(lang, kind, "", std::nullopt, "origin");
      m["threshold"] = evaluate(lang, kind, th_file, threshold, "threshold");
      m["top80"] = evaluate(lang, kind, top_file, top, "top80");
      entry[kind] = m;
    }
    std::vector<double> random_ppl;
    for (int s = 1; s <= kRandomSeeds; ++s) {
      const PruneMask rnd = mask_random_like(threshold, static_cast<std::uint64_t>(s));
      const std::string rfile = "masks/" + lang + ".random" + std::to_string(s) + ".mask";
      save_mask(rnd, run.at(rfile));
      run.emit({"prune", "random", "--like", th_file, "--seed", std::to_string(s), "--out", rfile}, {},
               {{"random", static_cast<std::uint64_t>(s)}}, {th_file}, {rfile});
      random_ppl.push_back(evaluate(lang, "ppl", rfile, rnd, "random" + std::to_string(s)));
    }
    double mean = 0;
    for (double v : random_ppl) mean += v / static_cast<double>(random_ppl.size());
    entry["ppl"]["random"] = random_ppl;
    entry["ppl"]["random_mean"] = mean;
    entry["threshold_beats_random"] = entry["ppl"]["threshold"].get<double>() <= mean;
    summary["languages"][lang] = entry;
  }

  // Render.
  std::cerr << "repro: rendering\n";
  for (const auto& [key, f] : freq) {
    const std::string in = "freq/" + key + ".freq", out = "figures/" + key + ".svg";
    render_heatmap(frequency_heatmap(f), run.at(out));
    run.emit({"render", "heatmap", "--in", in, "--out", out}, {{"kind", "heatmap"}}, {}, {in}, {out});
  }
  render_heatmap(diff_heatmap(diff), run.at("figures/diff.svg"));
  run.emit({"render", "diff", "--in", "analysis/diff.grid", "--out", "figures/diff.svg"}, {{"kind", "diff"}}, {},
           {"analysis/diff.grid"}, {"figures/diff.svg"});
  render_heatmap(shared_heatmap(shared), run.at("figures/shared.svg"));
  run.emit({"render", "shared", "--in", "analysis/shared.grid", "--out", "figures/shared.svg"}, {{"kind", "shared"}},
           {}, {"analysis/shared.grid"}, {"figures/shared.svg"});
  const auto sim_files = render_similarity(report, run.at("figures"));
  std::vector<std::string> sim_rel;
  for (const auto& p : sim_files) sim_rel.push_back("figures/" + p.filename().string());
  run.emit({"render", "similarity", "--in", "analysis/similarity.json", "--outdir", "figures"},
           {{"kind", "similarity"}}, {}, {"analysis/similarity.json"}, sim_rel);

  write_text_file(run.at("summary.json"), summary.dump(2) + "\n");

  // Top-level manifest over every artifact (manifests included).
  std::vector<fs::path> outputs = run.artifacts;
  outputs.push_back(run.at("summary.json"));
  std::sort(outputs.begin(), outputs.end());
  RunManifest top{{"repro", "--fixture", options.fixture, "--seed", std::to_string(seed), "--train-steps",
                   std::to_string(options.train_steps)},
                  {{"fixture", options.fixture},
                   {"train_steps", options.train_steps},
                   {"experts", kExperts},
                   {"kept_proportion", kKeptProportion},
                   {"top_percent", kTopPercent},
                   {"shared_tau", kSharedTau}},
                  {{"fixture", seed}},
                  {},
                  outputs};
  ReproResult result;
  result.manifest = write_manifest(top, run.at("repro"));
  result.artifacts = outputs;
  result.artifacts.push_back(result.manifest);
  return result;
}

}  // namespace moelens
