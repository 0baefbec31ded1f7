#include "moelens/cli.hpp"

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
#include "moelens/repro.hpp"
#include "moelens/toy.hpp"
#include "moelens/train.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace moelens::cli {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base.parent_path() / base.stem();
  p += suffix;
  return p;
}

Tokenizer make_tokenizer(const std::string& vocab_file) {
  return vocab_file.empty() ? Tokenizer() : Tokenizer::from_vocab_file(vocab_file);
}

std::vector<fs::path> existing(const std::vector<std::string>& paths) {
  return {paths.begin(), paths.end()};
}

struct Context {
  std::vector<std::string> command;
  std::function<void()> action;
};

void add_gen_toy(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("gen-toy", "Generate a seeded toy model (optionally trained on synthetic corpora)");
  struct Opts {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::string out, corpus_dir;
    int train_steps = 0;
    int samples = 400;
    bool tied = false;
  };
  auto o = std::make_shared<Opts>();
  o->config = ModelConfig{4, 32, 128, 4, 259, 64};
  sub->add_option("--layers", o->config.n_layers, "number of decoder layers")->capture_default_str();
  sub->add_option("--d-model", o->config.d_model, "hidden width")->capture_default_str();
  sub->add_option("--d-ff", o->config.d_ff, "FFN intermediate width")->capture_default_str();
  sub->add_option("--heads", o->config.n_heads, "attention heads")->capture_default_str();
  sub->add_option("--vocab", o->config.vocab_size, "vocabulary size (>= 259 for the byte tokenizer)")->capture_default_str();
  sub->add_option("--max-seq", o->config.max_seq_len, "maximum sequence length")->capture_default_str();
  sub->add_option("--rope-theta", o->config.rope_theta)->capture_default_str();
  sub->add_flag("--tied", o->tied, "tie the output head to the token embedding");
  sub->add_option("--seed", o->seed, "random seed")->required();
  sub->add_option("--train-steps", o->train_steps, "train on the synthetic bilingual corpus for this many steps")
      ->capture_default_str();
  sub->add_option("--samples", o->samples, "synthetic samples per language")->capture_default_str();
  sub->add_option("--corpus-dir", o->corpus_dir, "also write the synthetic corpora (la.jsonl, lb.jsonl) here");
  sub->add_option("--out", o->out, "output MLTB file")->required();
  sub->callback([&ctx, o] {
    ctx.action = [&ctx, o] {
      o->config.tied_head = o->tied;
      ModelBundle model = random_model(o->config, o->seed);
      RunManifest man{ctx.command, {}, {{"model", o->seed}}, {}, {}};
      const auto langs = bilingual_languages(o->seed);
      std::vector<std::vector<std::string>> corpora;
      for (size_t l = 0; l < langs.size(); ++l)
        corpora.push_back(synthetic_corpus(langs[l], o->samples, 10, o->seed * 16 + l));
      if (o->train_steps > 0) {
        if (o->config.vocab_size < Tokenizer::kByteVocab)
          throw DataError("gen-toy: training needs vocab >= 259 for the byte tokenizer");
        Tokenizer tok;
        std::vector<std::vector<TokenId>> samples;
        for (const auto& c : corpora)
          for (const auto& t : c) samples.push_back(tokenize_sample(tok, t, o->config.max_seq_len));
        TrainConfig tc;
        tc.steps = o->train_steps;
        tc.seed = o->seed;
        const auto report = train(model, samples, tc);
        man.seeds["train"] = o->seed;
        std::cerr << "trained " << o->train_steps << " steps, loss " << report.losses.front() << " -> "
                  << report.losses.back() << "\n";
      }
      save_model(model, o->out);
      man.outputs.push_back(o->out);
      if (!o->corpus_dir.empty()) {
        for (size_t l = 0; l < langs.size(); ++l) {
          const fs::path p = fs::path(o->corpus_dir) / (langs[l].tag + ".jsonl");
          write_text_file(p, write_text_corpus(corpora[l]));
          man.outputs.push_back(p);
        }
        man.seeds["corpus"] = o->seed;
      }
      man.config = {{"n_layers", o->config.n_layers}, {"d_model", o->config.d_model}, {"d_ff", o->config.d_ff},
                    {"n_heads", o->config.n_heads},   {"vocab_size", o->config.vocab_size},
                    {"max_seq_len", o->config.max_seq_len}, {"tied_head", o->tied},
                    {"train_steps", o->train_steps}, {"samples", o->samples}};
      write_manifest(man, o->out);
      std::cout << o->out << ": " << model.parameter_count() << " parameters\n";
    };
  });
}

void add_split(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("split", "Partition every FFN layer into equal-sized experts (balanced K-Means)");
  struct Opts {
    std::string model, out, init = "kmeans++";
    ClusterConfig cfg;
    int workers = 1;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "MLTB model")->required()->check(CLI::ExistingFile);
  sub->add_option("--experts", o->cfg.n_experts, "experts per layer")->capture_default_str();
  sub->add_option("--seed", o->cfg.seed, "clustering seed")->required();
  sub->add_option("--max-iter", o->cfg.max_iterations, "maximum K-Means iterations")->capture_default_str();
  sub->add_option("--init", o->init, "centroid initialisation")
      ->check(CLI::IsMember({"kmeans++", "random"}))
      ->capture_default_str();
  sub->add_flag("--standardize", o->cfg.standardize_rows, "z-standardize rows before clustering");
  sub->add_option("--workers", o->workers, "worker threads")->capture_default_str();
  sub->add_option("--out", o->out, "partition JSON")->required();
  sub->callback([&ctx, o] {
    ctx.action = [&ctx, o] {
      o->cfg.init = o->init == "random" ? ClusterInit::random : ClusterInit::kmeans_plus_plus;
      const ModelBundle model = load_model(o->model);
      const ExpertPartition p = split_model(model, o->cfg, o->workers);
      save_partition(p, o->out);
      RunManifest man{ctx.command,
                      {{"experts", o->cfg.n_experts},
                       {"max_iter", o->cfg.max_iterations},
                       {"init", o->init},
                       {"standardize", o->cfg.standardize_rows}},
                      {{"split", o->cfg.seed}},
                      {o->model},
                      {o->out}};
      write_manifest(man, o->out);
    };
  });
}

void add_profile(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("profile", "Count per-expert top-k selections over a corpus");
  struct Opts {
    std::string model, partition, corpus, out, vocab, model_id;
    ProfileConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model)->required()->check(CLI::ExistingFile);
  sub->add_option("--partition", o->partition)->required()->check(CLI::ExistingFile);
  sub->add_option("--corpus", o->corpus, "JSON-lines corpus of {\"text\": ...}")->required()->check(CLI::ExistingFile);
  sub->add_option("--lang", o->cfg.language_tag, "language tag")->required();
  sub->add_option("--topk", o->cfg.top_k, "experts selected per token (0 = 10% of layers*experts)")
      ->capture_default_str();
  sub->add_option("--max-tokens", o->cfg.max_tokens_per_sample, "tokens per sample")->capture_default_str();
  sub->add_option("--max-samples", o->cfg.max_samples, "samples to profile")->capture_default_str();
  sub->add_option("--vocab-file", o->vocab, "greedy longest-match vocabulary");
  sub->add_option("--model-id", o->model_id, "model id recorded in the header (default: model file stem)");
  sub->add_option("--workers", o->cfg.workers, "worker threads")->capture_default_str();
  sub->add_option("--out", o->out, "frequency matrix file")->required();
  sub->callback([&ctx, o] {
    ctx.action = [&ctx, o] {
      const ModelBundle model = load_model(o->model);
      const ExpertPartition partition = load_partition(o->partition);
      const Tokenizer tok = make_tokenizer(o->vocab);
      o->cfg.model_id = o->model_id.empty() ? fs::path(o->model).stem().string() : o->model_id;
      std::vector<std::vector<TokenId>> samples;
      for (const auto& t : read_text_corpus(o->corpus)) samples.push_back(tokenize_sample(tok, t, 0));
      const FrequencyMatrix f = profile_corpus(model, partition, samples, o->cfg);
      save_frequency(f, o->out);
      RunManifest man{ctx.command,
                      {{"lang", o->cfg.language_tag},
                       {"topk", f.top_k},
                       {"max_tokens", o->cfg.max_tokens_per_sample},
                       {"max_samples", o->cfg.max_samples},
                       {"model_id", o->cfg.model_id}},
                      {},
                      {o->model, o->partition, o->corpus},
                      {o->out}};
      if (!o->vocab.empty()) man.inputs.push_back(o->vocab);
      write_manifest(man, o->out);
    };
  });
}

void add_analyze(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("analyze", "Compare frequency matrices");
  sub->require_subcommand(1);

  auto* sim = sub->add_subcommand("similarity", "Euclidean / KL / Pearson between languages");
  auto sim_in = std::make_shared<std::vector<std::string>>();
  auto sim_out = std::make_shared<std::string>();
  sim->add_option("inputs", *sim_in, "frequency matrices")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", *sim_out, "report JSON")->required();
  sim->callback([&ctx, sim_in, sim_out] {
    ctx.action = [&ctx, sim_in, sim_out] {
      std::vector<FrequencyMatrix> ms;
      for (const auto& p : *sim_in) ms.push_back(load_frequency(p));
      write_text_file(*sim_out, similarity_to_json(similarity_report(ms)));
      write_manifest(RunManifest{ctx.command, {{"metric", "similarity"}}, {}, existing(*sim_in), {*sim_out}}, *sim_out);
    };
  });

  auto* shared = sub->add_subcommand("shared", "Count languages in which each expert is high-frequency");
  auto sh_in = std::make_shared<std::vector<std::string>>();
  auto sh_out = std::make_shared<std::string>();
  auto tau = std::make_shared<double>(0.05);
  shared->add_option("--tau", *tau, "high-frequency threshold (inclusive)")->capture_default_str();
  shared->add_option("inputs", *sh_in, "frequency matrices")->required()->check(CLI::ExistingFile);
  shared->add_option("--out", *sh_out, "shared-expert grid")->required();
  shared->callback([&ctx, sh_in, sh_out, tau] {
    ctx.action = [&ctx, sh_in, sh_out, tau] {
      std::vector<FrequencyMatrix> ms;
      for (const auto& p : *sh_in) ms.push_back(load_frequency(p));
      write_text_file(*sh_out, shared_map_to_text(shared_expert_map(ms, *tau)));
      write_manifest(RunManifest{ctx.command, {{"tau", *tau}}, {}, existing(*sh_in), {*sh_out}}, *sh_out);
    };
  });

  auto* diff = sub->add_subcommand("diff", "Tuned minus base activation frequency");
  auto base = std::make_shared<std::string>(), tuned = std::make_shared<std::string>();
  auto d_out = std::make_shared<std::string>();
  diff->add_option("base", *base, "base model frequency matrix")->required()->check(CLI::ExistingFile);
  diff->add_option("tuned", *tuned, "tuned model frequency matrix")->required()->check(CLI::ExistingFile);
  diff->add_option("--out", *d_out, "diff grid")->required();
  diff->callback([&ctx, base, tuned, d_out] {
    ctx.action = [&ctx, base, tuned, d_out] {
      write_text_file(*d_out, diff_to_text(diff_matrix(load_frequency(*base), load_frequency(*tuned))));
      write_manifest(RunManifest{ctx.command, {{"metric", "diff"}}, {}, {*base, *tuned}, {*d_out}}, *d_out);
    };
  });
}

void add_prune(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("prune", "Derive expert keep-masks and estimate savings");
  sub->require_subcommand(1);

  auto* th = sub->add_subcommand("threshold", "Keep experts with frequency >= tau");
  auto th_freq = std::make_shared<std::string>(), th_out = std::make_shared<std::string>();
  auto th_tau = std::make_shared<double>(0.0);
  th->add_option("--freq", *th_freq)->required()->check(CLI::ExistingFile);
  th->add_option("--tau", *th_tau, "inclusive frequency threshold in [0, 1]")->required();
  th->add_option("--out", *th_out, "mask JSON (default <freq>.tau<tau>.mask)");
  th->callback([&ctx, th_freq, th_out, th_tau] {
    ctx.action = [&ctx, th_freq, th_out, th_tau] {
      const fs::path out = th_out->empty() ? with_suffix(*th_freq, ".tau" + format_real(*th_tau) + ".mask") : fs::path(*th_out);
      const PruneMask m = mask_by_threshold(load_frequency(*th_freq), *th_tau);
      save_mask(m, out);
      write_manifest(RunManifest{ctx.command, {{"tau", *th_tau}}, {}, {*th_freq}, {out}}, out);
      std::cout << out.string() << ": kept proportion " << m.kept_proportion() << "\n";
    };
  });

  auto* top = sub->add_subcommand("top", "Keep the top p% of experts in each layer");
  auto top_freq = std::make_shared<std::string>(), top_out = std::make_shared<std::string>();
  auto percent = std::make_shared<double>(80.0);
  top->add_option("--freq", *top_freq)->required()->check(CLI::ExistingFile);
  top->add_option("--percent", *percent, "percent of experts kept per layer, (0, 100]")->required();
  top->add_option("--out", *top_out, "mask JSON (default <freq>.top<p>.mask)");
  top->callback([&ctx, top_freq, top_out, percent] {
    ctx.action = [&ctx, top_freq, top_out, percent] {
      const fs::path out = top_out->empty() ? with_suffix(*top_freq, ".top" + format_real(*percent) + ".mask") : fs::path(*top_out);
      const PruneMask m = mask_by_top_percent(load_frequency(*top_freq), *percent);
      save_mask(m, out);
      write_manifest(RunManifest{ctx.command, {{"percent", *percent}}, {}, {*top_freq}, {out}}, out);
      std::cout << out.string() << ": kept proportion " << m.kept_proportion() << "\n";
    };
  });

  auto* rnd = sub->add_subcommand("random", "Random mask with the same per-layer keep counts");
  auto like = std::make_shared<std::string>(), rnd_out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  rnd->add_option("--like", *like, "reference mask")->required()->check(CLI::ExistingFile);
  rnd->add_option("--seed", *seed, "sampling seed")->required();
  rnd->add_option("--out", *rnd_out, "mask JSON (default <like>.random<seed>.mask)");
  rnd->callback([&ctx, like, rnd_out, seed] {
    ctx.action = [&ctx, like, rnd_out, seed] {
      const fs::path out = rnd_out->empty() ? with_suffix(*like, ".random" + std::to_string(*seed) + ".mask") : fs::path(*rnd_out);
      save_mask(mask_random_like(load_mask(*like), *seed), out);
      write_manifest(RunManifest{ctx.command, {}, {{"random", *seed}}, {*like}, {out}}, out);
      std::cout << out.string() << "\n";
    };
  });

  auto* flops = sub->add_subcommand("flops", "Per-token FLOPs of the dense and masked model");
  auto f_model = std::make_shared<std::string>(), f_mask = std::make_shared<std::string>();
  auto f_out = std::make_shared<std::string>();
  auto seq_len = std::make_shared<int>(200);
  flops->add_option("--model", *f_model)->required()->check(CLI::ExistingFile);
  flops->add_option("--mask", *f_mask)->required()->check(CLI::ExistingFile);
  flops->add_option("--seq-len", *seq_len, "context length used for the attention term")->capture_default_str();
  flops->add_option("--out", *f_out, "write the estimate as JSON");
  flops->callback([&ctx, f_model, f_mask, f_out, seq_len] {
    ctx.action = [&ctx, f_model, f_mask, f_out, seq_len] {
      const ModelBundle model = load_model(*f_model);
      const FlopsEstimate e = estimate_flops(model.config, load_mask(*f_mask), *seq_len);
      nlohmann::ordered_json j{{"dense_flops_per_token", e.dense_flops},
                               {"pruned_flops_per_token", e.pruned_flops},
                               {"ffn_param_reduction", e.ffn_param_reduction},
                               {"total_flops_reduction", e.total_flops_reduction},
                               {"seq_len", *seq_len}};
      std::cout << j.dump(2) << "\n";
      if (!f_out->empty()) {
        write_text_file(*f_out, j.dump(2) + "\n");
        write_manifest(RunManifest{ctx.command, {{"seq_len", *seq_len}}, {}, {*f_model, *f_mask}, {*f_out}}, *f_out);
      }
    };
  });
}

void add_eval(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("eval", "Perplexity, multiple-choice accuracy and exact match");
  sub->require_subcommand(1);
  struct Opts {
    std::string model, partition, mask, data, lang = "und", out, vocab, scoring = "normalized";
    int max_tokens = 200;
    int max_new_tokens = 16;
  };
  auto add_common = [](CLI::App* s, Opts& o) {
    s->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
    s->add_option("--partition", o.partition, "required with --mask")->check(CLI::ExistingFile);
    s->add_option("--mask", o.mask, "evaluate with only the kept experts")->check(CLI::ExistingFile);
    s->add_option("--data", o.data, "JSON-lines data")->required()->check(CLI::ExistingFile);
    s->add_option("--lang", o.lang)->capture_default_str();
    s->add_option("--vocab-file", o.vocab, "greedy longest-match vocabulary");
    s->add_option("--out", o.out, "result JSON")->required();
  };
  auto run = [&ctx](const std::shared_ptr<Opts>& o, const std::string& kind) {
    const ModelBundle model = load_model(o->model);
    const Tokenizer tok = make_tokenizer(o->vocab);
    std::optional<ExpertPartition> partition;
    std::optional<PruneMask> mask;
    if (!o->mask.empty()) {
      if (o->partition.empty()) throw CLI::RequiresError("--mask", "--partition");
      partition = load_partition(o->partition);
      mask = load_mask(o->mask);
    }
    const MaskedModel target = mask ? MaskedModel(model, *partition, *mask) : MaskedModel(model);
    EvalResult r;
    nlohmann::ordered_json config{{"metric", kind}, {"lang", o->lang}};
    if (kind == "ppl") {
      r = perplexity(target, tok, read_text_corpus(o->data), o->max_tokens, o->lang);
      config["max_tokens"] = o->max_tokens;
    } else if (kind == "mcq") {
      r = mcq_accuracy(target, tok, read_mcq_items(o->data),
                       o->scoring == "raw" ? McqScoring::raw_sum : McqScoring::length_normalized, o->lang);
      config["scoring"] = o->scoring;
    } else {
      r = exact_match(target, tok, read_gen_items(o->data), o->max_new_tokens, o->lang);
      config["max_new_tokens"] = o->max_new_tokens;
    }
    write_text_file(o->out, eval_result_to_json(r));
    RunManifest man{ctx.command, config, {}, {o->model, o->data}, {o->out}};
    if (!o->partition.empty()) man.inputs.push_back(o->partition);
    if (!o->mask.empty()) man.inputs.push_back(o->mask);
    write_manifest(man, o->out);
    std::cout << kind << " " << r.mask << " " << r.value << "\n";
  };

  auto ppl = std::make_shared<Opts>();
  auto* s_ppl = sub->add_subcommand("ppl", "Corpus perplexity");
  add_common(s_ppl, *ppl);
  s_ppl->add_option("--max-tokens", ppl->max_tokens, "tokens per sample")->capture_default_str();
  s_ppl->callback([&ctx, ppl, run] { ctx.action = [ppl, run] { run(ppl, "ppl"); }; });

  auto mcq = std::make_shared<Opts>();
  auto* s_mcq = sub->add_subcommand("mcq", "Multiple-choice accuracy");
  add_common(s_mcq, *mcq);
  s_mcq->add_option("--scoring", mcq->scoring, "option scoring")
      ->check(CLI::IsMember({"normalized", "raw"}))
      ->capture_default_str();
  s_mcq->callback([&ctx, mcq, run] { ctx.action = [mcq, run] { run(mcq, "mcq"); }; });

  auto gen = std::make_shared<Opts>();
  auto* s_gen = sub->add_subcommand("gen", "Greedy-generation exact match");
  add_common(s_gen, *gen);
  s_gen->add_option("--max-new-tokens", gen->max_new_tokens)->capture_default_str();
  s_gen->callback([&ctx, gen, run] { ctx.action = [gen, run] { run(gen, "gen"); }; });
}

void add_render(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("render", "Write SVG heatmaps");
  sub->require_subcommand(1);
  auto add_grid = [&](const char* name, const char* help, std::function<HeatmapSpec(const std::string&)> load) {
    auto* s = sub->add_subcommand(name, help);
    auto in = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    s->add_option("--in", *in)->required()->check(CLI::ExistingFile);
    s->add_option("--out", *out, "SVG file")->required();
    s->callback([&ctx, in, out, load, name] {
      ctx.action = [&ctx, in, out, load, name] {
        render_heatmap(load(read_text_file(*in)), *out);
        write_manifest(RunManifest{ctx.command, {{"kind", name}}, {}, {*in}, {*out}}, *out);
      };
    });
  };
  add_grid("heatmap", "Activation-frequency heatmap", [](const std::string& t) { return frequency_heatmap(frequency_from_text(t)); });
  add_grid("diff", "Diverging heatmap of a diff grid", [](const std::string& t) { return diff_heatmap(diff_from_text(t)); });
  add_grid("shared", "Shared-expert map", [](const std::string& t) { return shared_heatmap(shared_map_from_text(t)); });

  auto* sim = sub->add_subcommand("similarity", "Three annotated language-by-language grids");
  auto in = std::make_shared<std::string>(), outdir = std::make_shared<std::string>();
  sim->add_option("--in", *in, "similarity report JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--outdir", *outdir, "output directory")->required();
  sim->callback([&ctx, in, outdir] {
    ctx.action = [&ctx, in, outdir] {
      const auto files = render_similarity(similarity_from_json(read_text_file(*in)), *outdir);
      write_manifest(RunManifest{ctx.command, {{"kind", "similarity"}}, {}, {*in}, files}, fs::path(*outdir) / "similarity");
    };
  });
}

void add_repro(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("repro", "Run the whole pipeline on a generated fixture");
  auto o = std::make_shared<ReproOptions>();
  sub->add_option("--fixture", o->fixture, "fixture name")->check(CLI::IsMember({"toy-bilingual"}))->capture_default_str();
  sub->add_option("--outdir", o->out_dir, "output directory")->capture_default_str();
  sub->add_option("--seed", o->seed, "fixture seed")->capture_default_str();
  sub->add_option("--train-steps", o->train_steps, "training steps for the toy model")->capture_default_str();
  sub->add_option("--workers", o->workers, "worker threads")->capture_default_str();
  sub->callback([&ctx, o] {
    ctx.action = [o] {
      const ReproResult r = run_repro(*o);
      std::cout << "wrote " << r.artifacts.size() << " files; manifest " << r.manifest.string() << "\n";
    };
  });
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"moe-lens: expert activation profiling and frequency-guided FFN pruning", "moe-lens"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Context ctx;
  ctx.command = args;
  add_gen_toy(app, ctx);
  add_split(app, ctx);
  add_profile(app, ctx);
  add_analyze(app, ctx);
  add_prune(app, ctx);
  add_eval(app, ctx);
  add_render(app, ctx);
  add_repro(app, ctx);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kToolVersion) + "\n"
                                                                  : app.help("", CLI::AppFormatMode::Normal));
      return kOk;
    }
    std::cerr << "error: " << e.what() << "\n" << "run 'moe-lens --help' for usage\n";
    return kUsageError;
  }
  try {
    if (ctx.action) ctx.action();
    return kOk;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace moelens::cli
