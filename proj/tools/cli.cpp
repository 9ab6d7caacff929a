#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsarank/bm25.hpp"
#include "tsarank/checkpoint.hpp"
#include "tsarank/config.hpp"
#include "tsarank/data.hpp"
#include "tsarank/error.hpp"
#include "tsarank/log.hpp"
#include "tsarank/metrics.hpp"
#include "tsarank/scoring.hpp"
#include "tsarank/synth.hpp"
#include "tsarank/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsarank::cli {
namespace {

struct Options {
  std::string command;
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
  std::vector<std::string> positional_overrides;
  // command specific
  std::optional<std::string> init;        // cpt: existing base checkpoint
  std::optional<std::string> from;        // sft: input checkpoint
  std::optional<std::string> checkpoint;  // rank / eval
  std::optional<std::string> run_file;    // eval input, rank output
  std::string param;                      // sweep
};

// JSON-Lines log of one command, truncated at start so re-runs are identical.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw Error(ErrorCode::Io, "cannot open log " + path.string());
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct Context {
  Options opt;
  RunConfig config;
  fs::path out;
  DataLayout data;
  RunLog* log = nullptr;

  RunMetadata meta(const std::string& label, const std::string& stage = {}) const {
    return {label, stage, config.seed, config.hash()};
  }
  StepSink sink() const {
    return [this](const StepRecord& r) {
      json j = r.to_json();
      j["event"] = "step";
      log->write(j);
    };
  }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

void require(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::MissingPrerequisite, what + " not found at " + path.string());
  }
}

template <typename T>
std::vector<T> take(LoadResult<T> result, const fs::path& path, Context& ctx) {
  for (const auto& bad : result.rejected) {
    ctx.log->write({{"event", "rejected_line"},
                    {"file", path.string()},
                    {"line", bad.line},
                    {"code", std::string(to_string(bad.code))},
                    {"message", bad.message}});
  }
  if (!result.rejected.empty()) {
    log::warn(std::to_string(result.rejected.size()) + " rejected lines in " + path.string());
  }
  return std::move(result.items);
}

std::vector<CorpusDoc> load_corpus_file(Context& ctx) {
  require(ctx.data.corpus(), "corpus");
  return take(load_corpus(ctx.data.corpus()), ctx.data.corpus(), ctx);
}

std::vector<Query> load_query_file(Context& ctx, const fs::path& path, const char* what) {
  require(path, what);
  return take(load_queries(path), path, ctx);
}

Qrels load_qrels_file(Context& ctx) {
  require(ctx.data.qrels(), "qrels");
  return load_qrels(ctx.data.qrels());
}

std::unordered_map<std::string, std::string> text_by_id(const std::vector<CorpusDoc>& corpus) {
  std::unordered_map<std::string, std::string> out;
  for (const auto& d : corpus) out.emplace(d.id, d.text);
  return out;
}

// Mines BM25 negatives for every training query and keeps the full candidate
// lists so that several m can be sampled from one mining pass.
std::vector<TrainingQuery> mine_training_queries(const std::vector<CorpusDoc>& corpus,
                                                 const std::vector<Query>& queries, const Qrels& qrels,
                                                 const MiningConfig& mining) {
  const InvertedIndex index = InvertedIndex::build(corpus);
  std::vector<TrainingQuery> out;
  for (const auto& q : queries) {
    TrainingQuery tq{q.id, q.text, qrels.relevant(q.id), {}};
    const std::unordered_set<std::string> pos(tq.positive_ids.begin(), tq.positive_ids.end());
    for (auto& s : mine_negatives(index, q.text, pos, mining.top_k, mining.bm25)) {
      tq.candidate_ids.push_back(std::move(s.doc_id));
    }
    out.push_back(std::move(tq));
  }
  return out;
}

std::vector<RankExample> mine_examples(Context& ctx, std::size_t m) {
  const auto corpus = load_corpus_file(ctx);
  const auto queries = load_query_file(ctx, ctx.data.train_queries(), "train queries");
  const Qrels qrels = load_qrels_file(ctx);
  const auto mined = mine_training_queries(corpus, queries, qrels, ctx.config.mining);
  return sample_examples(mined, m, ctx.config.seed, ctx.config.mining.top_k);
}

EvalSet load_eval_set(Context& ctx) {
  const auto corpus = load_corpus_file(ctx);
  const auto queries = load_query_file(ctx, ctx.data.eval_queries(), "eval queries");
  return build_eval_set(corpus, queries, load_qrels_file(ctx), ctx.config.eval);
}

LmCheckpoint fresh_base(const Context& ctx) { return LmCheckpoint::initialize(ctx.config.model, ctx.config.seed); }

LmCheckpoint load_model(const fs::path& path, const Context& ctx, const std::string& what) {
  require(path, what);
  return load_checkpoint(path, ctx.config.model);
}

std::vector<RankingInstance> load_instances(Context& ctx, std::size_t m) {
  const fs::path path = fs::exists(ctx.out / "rank_examples.jsonl") ? ctx.out / "rank_examples.jsonl"
                                                                     : ctx.data.rank_examples();
  require(path, "rank examples (run `tsarank mine` first)");
  const auto examples = take(load_rank_examples(path), path, ctx);
  return resolve_examples(examples, text_by_id(load_corpus_file(ctx)), m);
}

// ---------------------------------------------------------------- commands

json cmd_synth(Context& ctx) {
  const SynthData data = synth_corpus(ctx.config.synth, ctx.config.seed);
  write_weak_pairs(ctx.out / "weak_pairs.jsonl", data.weak_pairs);
  write_corpus(ctx.out / "corpus.jsonl", data.corpus);
  write_queries(ctx.out / "train_queries.jsonl", data.train_queries);
  write_queries(ctx.out / "eval_queries.jsonl", data.eval_queries);
  write_qrels(ctx.out / "qrels.tsv", data.qrels);

  ctx.data = DataLayout{ctx.out};
  const auto examples = mine_examples(ctx, ctx.config.sft.sft.negatives);
  write_rank_examples(ctx.out / "rank_examples.jsonl", examples);

  const std::string fp = fingerprint(data);
  const json manifest = {{"fingerprint", fp},
                         {"config_hash", ctx.config.hash()},
                         {"seed", ctx.config.seed},
                         {"weak_pairs", data.weak_pairs.size()},
                         {"corpus", data.corpus.size()},
                         {"train_queries", data.train_queries.size()},
                         {"eval_queries", data.eval_queries.size()},
                         {"rank_examples", examples.size()},
                         {"weak_pair_overlap", mean_query_overlap(data.weak_pairs)}};
  write_json(ctx.out / "manifest.json", manifest);
  std::cout << "fingerprint " << fp << '\n';
  return manifest;
}

json cmd_mine(Context& ctx) {
  const auto examples = mine_examples(ctx, ctx.config.sft.sft.negatives);
  write_rank_examples(ctx.out / "rank_examples.jsonl", examples);
  return {{"rank_examples", examples.size()}, {"m", ctx.config.sft.sft.negatives}};
}

json cmd_cpt(Context& ctx) {
  LmCheckpoint base = ctx.opt.init ? load_model(*ctx.opt.init, ctx, "base checkpoint") : fresh_base(ctx);
  if (!ctx.opt.init) save_checkpoint(base, ctx.out / "base.ckpt");
  require(ctx.data.weak_pairs(), "weak pairs");
  const auto pairs = take(load_weak_pairs(ctx.data.weak_pairs()), ctx.data.weak_pairs(), ctx);
  const StageResult res = run_cpt(base, pairs, ctx.config.cpt, ctx.sink());
  save_checkpoint(res.model, ctx.out / "cpt.ckpt");
  return {{"checkpoint", (ctx.out / "cpt.ckpt").string()},
          {"steps", res.steps.size()},
          {"final_loss", res.steps.back().loss},
          {"data_fingerprint", res.model.metadata().data_fingerprint}};
}

json cmd_sft(Context& ctx) {
  const fs::path from = ctx.opt.from ? fs::path(*ctx.opt.from) : ctx.out / "cpt.ckpt";
  const LmCheckpoint input = load_model(from, ctx, "input checkpoint for sft (run `tsarank cpt` first)");
  const auto instances = load_instances(ctx, ctx.config.sft.sft.negatives);
  const StageResult res = run_sft(input, instances, ctx.config.sft, ctx.sink());
  save_checkpoint(res.model, ctx.out / "sft.ckpt");
  return {{"checkpoint", (ctx.out / "sft.ckpt").string()},
          {"input_stage", std::string(to_string(input.stage()))},
          {"steps", res.steps.size()},
          {"final_loss", res.steps.back().loss}};
}

json cmd_rank(Context& ctx) {
  const fs::path ckpt = ctx.opt.checkpoint ? fs::path(*ctx.opt.checkpoint) : ctx.out / "sft.ckpt";
  const LmCheckpoint model = load_model(ckpt, ctx, "checkpoint to rank with");
  const auto corpus = load_corpus_file(ctx);
  const auto queries = load_query_file(ctx, ctx.data.eval_queries(), "eval queries");
  const InvertedIndex index = InvertedIndex::build(corpus);
  std::vector<RankedList> runs;
  for (const auto& q : queries) {
    std::vector<Document> docs;
    for (const auto& c : build_candidates(index, q.text, ctx.config.eval.candidates, ctx.config.eval.bm25)) {
      docs.push_back({c.doc_id, tokenize(corpus[*index.ordinal(c.doc_id)].text)});
    }
    runs.push_back(rank(model, q.id, tokenize(q.text, SpanRole::Query), docs));
  }
  const fs::path run_path =
      ctx.opt.run_file ? fs::path(*ctx.opt.run_file) : ctx.out / ("run." + std::string(to_string(model.stage())) + ".tsv");
  write_run_file(run_path, runs);
  return {{"run_file", run_path.string()}, {"queries", runs.size()}};
}

json cmd_eval(Context& ctx) {
  if (!ctx.opt.run_file) throw Error(ErrorCode::ConfigValidation, "eval needs --run FILE");
  require(*ctx.opt.run_file, "run file");
  const auto runs = read_run_file(*ctx.opt.run_file);
  const Qrels qrels = load_qrels_file(ctx);
  MetricsReport report = evaluate_runs(runs, qrels, ctx.config.eval.k, ctx.meta(fs::path(*ctx.opt.run_file).stem()));
  if (ctx.opt.checkpoint) {
    const LmCheckpoint model = load_model(*ctx.opt.checkpoint, ctx, "checkpoint for analysis");
    report.meta.stage = std::string(to_string(model.stage()));
    const EvalSet eval = load_eval_set(ctx);
    const MetricsReport analysis = evaluate_model(model, eval, report.meta, true, ctx.config.eval.generation_max_len);
    report.ppl = analysis.ppl;
    report.tokens = analysis.tokens;
  }
  write_json(ctx.out / "report.json", report.to_json());
  const std::string table = format_table(std::span(&report, 1));
  write_text(ctx.out / "report.txt", table);
  std::cout << table;
  return {{"report", (ctx.out / "report.json").string()}, {"ndcg_mean", report.ndcg_mean}};
}

json cmd_ablate(Context& ctx) {
  const LmCheckpoint base = fresh_base(ctx);
  AblationData data;
  require(ctx.data.weak_pairs(), "weak pairs");
  data.weak_pairs = take(load_weak_pairs(ctx.data.weak_pairs()), ctx.data.weak_pairs(), ctx);
  data.sft_examples = load_instances(ctx, ctx.config.sft.sft.negatives);
  data.eval = load_eval_set(ctx);
  const AblationReport report =
      ablation_suite(base, data, ctx.config.cpt, ctx.config.sft, ctx.meta("ablation"), ctx.sink());
  json j = report.to_json();
  j["config_hash"] = ctx.config.hash();
  j["seed"] = ctx.config.seed;
  write_json(ctx.out / "ablation.json", j);
  const std::string table = format_table(report.rows);
  write_text(ctx.out / "ablation.txt", table);
  std::cout << table;
  return {{"report", (ctx.out / "ablation.json").string()},
          {"alpha_one_max_step_diff", report.alpha_one_max_step_diff}};
}

std::string value_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

json cmd_sweep(Context& ctx) {
  const SweepConfig& sweep = ctx.config.sweep;
  const std::string& param = ctx.opt.param;
  std::vector<double> values;
  if (param == "alpha") {
    values = sweep.alpha;
  } else if (param == "m") {
    for (auto m : sweep.m) {
      if (m > ctx.config.mining.top_k) {
        throw Error(ErrorCode::ConfigValidation, "sweep.m value " + std::to_string(m) + " exceeds mining.top_k " +
                                                     std::to_string(ctx.config.mining.top_k));
      }
      values.push_back(static_cast<double>(m));
    }
  } else if (param == "cpt_fraction") {
    values = sweep.cpt_fractions;
  } else {
    throw Error(ErrorCode::ConfigValidation, "sweep --param must be alpha, m or cpt_fraction");
  }
  if (values.empty()) throw Error(ErrorCode::ConfigValidation, "sweep." + param + " is empty");

  const LmCheckpoint base = fresh_base(ctx);
  require(ctx.data.weak_pairs(), "weak pairs");
  const auto pairs = take(load_weak_pairs(ctx.data.weak_pairs()), ctx.data.weak_pairs(), ctx);
  const EvalSet eval = load_eval_set(ctx);
  const auto corpus = load_corpus_file(ctx);
  const auto doc_text = text_by_id(corpus);

  std::optional<LmCheckpoint> shared_cpt;
  if (param != "cpt_fraction") shared_cpt = run_cpt(base, pairs, ctx.config.cpt, ctx.sink()).model;
  std::vector<TrainingQuery> mined;
  if (param == "m") {
    const auto queries = load_query_file(ctx, ctx.data.train_queries(), "train queries");
    mined = mine_training_queries(corpus, queries, load_qrels_file(ctx), ctx.config.mining);
  }

  std::vector<MetricsReport> reports;
  json summary = {{"param", param}, {"config_hash", ctx.config.hash()}, {"seed", ctx.config.seed}};
  for (double v : values) {
    StageConfig sft = ctx.config.sft;
    LmCheckpoint start;
    std::vector<RankingInstance> instances;
    if (param == "alpha") {
      sft.sft.alpha = v;
      start = *shared_cpt;
      instances = load_instances(ctx, sft.sft.negatives);
    } else if (param == "m") {
      sft.sft.negatives = static_cast<std::size_t>(v);
      start = *shared_cpt;
      instances = resolve_examples(sample_examples(mined, sft.sft.negatives, ctx.config.seed, ctx.config.mining.top_k),
                                   doc_text, sft.sft.negatives);
    } else {
      const auto n = static_cast<std::size_t>(std::ceil(v * static_cast<double>(pairs.size())));
      const std::span<const WeakPair> subset(pairs.data(), std::max<std::size_t>(1, std::min(n, pairs.size())));
      start = run_cpt(base, subset, ctx.config.cpt, ctx.sink()).model;
      instances = load_instances(ctx, sft.sft.negatives);
    }
    ctx.log->write({{"event", "sweep_point"}, {"param", param}, {"value", v}});
    const LmCheckpoint model = run_sft(start, instances, sft, ctx.sink()).model;
    const std::string label = param + "=" + value_label(v);
    MetricsReport report = evaluate_model(model, eval, ctx.meta(label), true, ctx.config.eval.generation_max_len);
    write_json(ctx.out / ("sweep_" + param + "_" + value_label(v) + ".json"), report.to_json());
    summary["points"].push_back({{"value", v}, {"ndcg_mean", report.ndcg_mean}, {"label", label}});
    reports.push_back(std::move(report));
  }
  write_json(ctx.out / ("sweep_" + param + "_summary.json"), summary);
  const std::string table = format_table(reports);
  write_text(ctx.out / ("sweep_" + param + "_summary.txt"), table);
  std::cout << table;
  return {{"reports", reports.size()}};
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigValidation:
    case ErrorCode::MissingPrerequisite:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Options opt;
  CLI::App app{"Two-stage adaptation of decoder-only LMs for text ranking", "tsarank"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  auto common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON run config");
    sub->add_option("--seed", opt.seed, "global seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--set", opt.overrides, "config override key.path=value (repeatable)");
    sub->add_option("overrides", opt.positional_overrides, "config overrides key.path=value");
  };
  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {{"synth", "generate the synthetic dataset and SFT examples"},
                        {"cpt", "continual pre-training: base -> cpt"},
                        {"sft", "supervised fine-tuning: cpt -> sft"},
                        {"mine", "mine BM25 negatives and sample SFT examples"},
                        {"rank", "rank BM25 candidates of the eval queries"},
                        {"eval", "score a run file against qrels"},
                        {"ablate", "train and evaluate the seven ablation configurations"},
                        {"sweep", "sweep alpha, m or the CPT data fraction"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    common(sub);
    subs[s.name] = sub;
  }
  subs["cpt"]->add_option("--init", opt.init, "existing base checkpoint (default: fresh init)");
  subs["sft"]->add_option("--from", opt.from, "input checkpoint (default: OUT/cpt.ckpt)");
  subs["rank"]->add_option("--checkpoint", opt.checkpoint, "checkpoint (default: OUT/sft.ckpt)");
  subs["rank"]->add_option("--run", opt.run_file, "run file to write");
  subs["eval"]->add_option("--run", opt.run_file, "run file to score")->required();
  subs["eval"]->add_option("--checkpoint", opt.checkpoint, "also report PPL and token statistics");
  subs["sweep"]->add_option("--param", opt.param, "alpha | m | cpt_fraction")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << json{{"event", "error"}, {"command", ""}, {"code", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  opt.overrides.insert(opt.overrides.end(), opt.positional_overrides.begin(), opt.positional_overrides.end());
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) opt.command = name;

  const fs::path out(opt.out);
  std::optional<RunLog> log_file;
  auto fail = [&](const std::string& code, const std::string& message, int exit_code) {
    const json record = {{"event", "error"}, {"command", opt.command}, {"code", code}, {"message", message}};
    std::cerr << record.dump() << '\n';
    if (log_file) log_file->write(record);
    return exit_code;
  };
  try {
    fs::create_directories(out);
    log_file.emplace(out / (opt.command + ".log.jsonl"));
    Context ctx;
    ctx.opt = opt;
    ctx.out = out;
    ctx.log = &*log_file;
    ctx.config = load_run_config(opt.config_path ? std::optional<fs::path>(*opt.config_path) : std::nullopt,
                                 opt.overrides, opt.seed);
    ctx.data = DataLayout{ctx.config.data_dir.empty() ? out : fs::path(ctx.config.data_dir)};
    write_json(out / (opt.command + ".config.json"), ctx.config.to_json());
    ctx.log->write({{"event", "start"},
                    {"command", opt.command},
                    {"config_hash", ctx.config.hash()},
                    {"seed", ctx.config.seed}});

    json result;
    if (opt.command == "synth") result = cmd_synth(ctx);
    else if (opt.command == "mine") result = cmd_mine(ctx);
    else if (opt.command == "cpt") result = cmd_cpt(ctx);
    else if (opt.command == "sft") result = cmd_sft(ctx);
    else if (opt.command == "rank") result = cmd_rank(ctx);
    else if (opt.command == "eval") result = cmd_eval(ctx);
    else if (opt.command == "ablate") result = cmd_ablate(ctx);
    else if (opt.command == "sweep") result = cmd_sweep(ctx);
    result["event"] = "done";
    result["command"] = opt.command;
    ctx.log->write(result);
    return 0;
  } catch (const Error& e) {
    return fail(std::string(to_string(e.code())), e.what(), exit_code_for(e.code()));
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}

}  // namespace tsarank::cli
