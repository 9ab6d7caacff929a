#include "tsarank/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tsarank/error.hpp"
#include "tsarank/hash.hpp"
#include "tsarank/log.hpp"
#include "tsarank/ops.hpp"
#include "tsarank/optim.hpp"
#include "tsarank/rng.hpp"

namespace tsarank {

void StageConfig::validate(const LmConfig& model) const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigValidation, "stage config: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be finite and >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (freeze.trainable_layers && *freeze.trainable_layers > model.num_layers) {
    fail("trainable_layers " + std::to_string(*freeze.trainable_layers) + " exceeds num_layers " +
         std::to_string(model.num_layers));
  }
  sft.validate();
}

void apply_freeze_policy(LmCheckpoint& model, const FreezePolicy& policy) {
  const std::size_t layers = model.config().num_layers;
  const std::size_t top = policy.trainable_count(layers);
  const std::size_t first_trainable = layers - std::min(top, layers);
  for (const auto& p : model.parameters()) {
    const std::string& name = p.name;
    bool on = false;
    if (name.rfind("embed.", 0) == 0) {
      on = policy.train_embeddings;
    } else if (name.rfind("layers.", 0) == 0) {
      const std::size_t index = std::stoul(name.substr(7, name.find('.', 7) - 7));
      on = index >= first_trainable;
    } else {
      on = policy.train_head;
    }
    Tensor t = p.value;
    t.set_requires_grad(on);
  }
}

nlohmann::json StepRecord::to_json() const {
  return {{"stage", stage}, {"step", step}, {"epoch", epoch}, {"loss", loss},          {"rank", rank},
          {"ntp", ntp},     {"dp", dp},     {"grad_norm", grad_norm}};
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

// Shared minibatch loop. `example_loss` records one example's loss on the
// graph and returns it together with its logged components.
template <typename LossFn>
std::vector<StepRecord> train_loop(LmCheckpoint& model, std::size_t n, const StageConfig& config, Stage stage,
                                   const StepSink& sink, LossFn example_loss) {
  std::vector<Tensor> params = model.trainable_parameters();
  Adam adam(params, AdamOptions{config.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<StepRecord> steps;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, epoch);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      model.zero_grads();
      StepRecord rec;
      rec.stage = std::string(to_string(stage));
      rec.epoch = epoch;
      rec.step = ++step;
      for (std::size_t i = start; i < end; ++i) {
        Graph graph(Graph::Mode::Record);
        SftLoss parts = example_loss(graph, order[i]);
        backward(graph, ops::scale(graph, parts.total, inv_b));
        rec.loss += parts.total.item() * inv_b;
        rec.rank += parts.rank * inv_b;
        rec.ntp += parts.ntp * inv_b;
        rec.dp += parts.dp * inv_b;
      }
      rec.grad_norm = clip_grad_norm(params, config.clip_norm);
      adam.step();
      if (sink) sink(rec);
      steps.push_back(rec);
    }
  }
  model.zero_grads();
  model.metadata() = TrainingMetadata{config.seed, config.epochs, step, {}};
  return steps;
}

std::uint64_t mix_ids(std::uint64_t h, const TokenSequence& seq) {
  const auto bytes = std::string_view(reinterpret_cast<const char*>(seq.ids.data()), seq.ids.size() * sizeof(TokenId));
  h = fnv1a64(bytes, h);
  return fnv1a64(std::string_view("\x1e", 1), h);
}

}  // namespace

StageResult run_cpt(const LmCheckpoint& base, std::span<const WeakPair> pairs, const StageConfig& config,
                    const StepSink& sink) {
  config.validate(base.config());
  if (base.stage() != Stage::Base) {
    throw Error(ErrorCode::ConfigMismatch,
                "cpt expects a base checkpoint, got stage " + std::string(to_string(base.stage())));
  }
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "cpt needs at least one weak pair");

  std::vector<TokenSequence> queries, docs;
  for (const auto& p : pairs) {
    queries.push_back(tokenize(p.query, SpanRole::Query));
    docs.push_back(tokenize(p.document, SpanRole::Document));
    if (queries.back().empty()) throw Error(ErrorCode::EmptyInput, "weak pair '" + p.id + "' has an empty query");
  }

  StageResult out{base.clone(), {}};
  apply_freeze_policy(out.model, FreezePolicy::all());
  out.steps = train_loop(out.model, pairs.size(), config, Stage::Cpt, sink, [&](Graph& g, std::size_t i) {
    SftLoss parts;
    parts.total = ops::scale(g, ntp_loss(g, out.model, queries[i], docs[i]),
                             1.0 / static_cast<double>(queries[i].size()));
    parts.ntp = parts.total.item();
    return parts;
  });
  out.model.set_trainable(false);
  out.model.set_stage(Stage::Cpt);
  out.model.metadata().data_fingerprint = fingerprint(pairs);
  return out;
}

StageResult run_sft(const LmCheckpoint& input, std::span<const RankingInstance> examples, const StageConfig& config,
                    const StepSink& sink) {
  config.validate(input.config());
  if (input.stage() == Stage::Sft) {
    throw Error(ErrorCode::ConfigMismatch, "sft expects a cpt (or base) checkpoint, got stage sft");
  }
  if (input.stage() == Stage::Base) log::warn("sft is starting from a base checkpoint (the -CPT configuration)");
  if (examples.empty()) throw Error(ErrorCode::InsufficientCandidates, "sft needs at least one ranking example");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].negatives.size() != config.sft.negatives) {
      throw Error(ErrorCode::ConfigMismatch, "sft example " + std::to_string(i) + " has " +
                                                 std::to_string(examples[i].negatives.size()) +
                                                 " negatives, config expects m = " +
                                                 std::to_string(config.sft.negatives));
    }
  }

  LmCheckpoint reference = input.clone();
  reference.set_trainable(false);
  StageResult out{input.clone(), {}};
  apply_freeze_policy(out.model, config.freeze);
  out.steps = train_loop(out.model, examples.size(), config, Stage::Sft, sink, [&](Graph& g, std::size_t i) {
    return sft_loss(g, out.model, reference, examples[i], config.sft, config.terms, NtpReduction::PerToken);
  });
  out.model.set_trainable(false);
  out.model.set_stage(Stage::Sft);
  out.model.metadata().data_fingerprint = fingerprint(examples);
  return out;
}

std::vector<RankingInstance> resolve_examples(std::span<const RankExample> examples,
                                              const std::unordered_map<std::string, std::string>& doc_text,
                                              std::size_t m) {
  auto lookup = [&](const std::string& id, const std::string& qid) -> const std::string& {
    auto it = doc_text.find(id);
    if (it == doc_text.end()) {
      throw Error(ErrorCode::UnknownId, "example for query '" + qid + "' references unknown document '" + id + "'");
    }
    return it->second;
  };
  std::vector<RankingInstance> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.negative_ids.size() != m) {
      throw Error(ErrorCode::ConfigMismatch, "example for query '" + ex.query_id + "' has " +
                                                 std::to_string(ex.negative_ids.size()) + " negatives, expected m = " +
                                                 std::to_string(m));
    }
    RankingInstance inst;
    inst.query = tokenize(ex.query, SpanRole::Query);
    inst.positive = tokenize(lookup(ex.positive_id, ex.query_id));
    for (const auto& id : ex.negative_ids) inst.negatives.push_back(tokenize(lookup(id, ex.query_id)));
    out.push_back(std::move(inst));
  }
  return out;
}

std::string fingerprint(std::span<const WeakPair> pairs) {
  std::uint64_t h = fnv1a64("tsarank-weak-pairs");
  for (const auto& p : pairs) {
    for (const std::string* s : {&p.id, &p.query, &p.document}) {
      h = fnv1a64(*s, h);
      h = fnv1a64(std::string_view("\x1f", 1), h);
    }
  }
  return hex64(h);
}

std::string fingerprint(std::span<const RankingInstance> examples) {
  std::uint64_t h = fnv1a64("tsarank-rank-examples");
  for (const auto& ex : examples) {
    h = mix_ids(h, ex.query);
    h = mix_ids(h, ex.positive);
    for (const auto& n : ex.negatives) h = mix_ids(h, n);
  }
  return hex64(h);
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) j["rows"].push_back(r.to_json());
  j["alpha_one_check"] = {{"max_step_loss_diff", alpha_one_max_step_diff}, {"steps", alpha_one_steps}};
  return j;
}

AblationReport ablation_suite(const LmCheckpoint& base, const AblationData& data, const StageConfig& cpt,
                              const StageConfig& sft, const RunMetadata& meta, const StepSink& sink) {
  if (data.weak_pairs.empty() || data.sft_examples.empty() || data.eval.queries.empty()) {
    throw Error(ErrorCode::EmptyInput, "ablation needs weak pairs, sft examples and an eval split");
  }
  auto with_terms = [&](bool ntp, bool dp) {
    StageConfig c = sft;
    c.terms = {ntp, dp};
    return c;
  };
  auto eval = [&](const LmCheckpoint& m, const char* label) {
    RunMetadata rm = meta;
    rm.label = label;
    rm.stage = std::string(to_string(m.stage()));
    log::info(std::string("evaluating ") + label);
    return evaluate_model(m, data.eval, rm, true);
  };

  log::info("ablation: cpt");
  const LmCheckpoint m_cpt = run_cpt(base, data.weak_pairs, cpt, sink).model;

  AblationReport report;
  report.rows.resize(7);
  log::info("ablation: full sft");
  report.rows[0] = eval(run_sft(m_cpt, data.sft_examples, sft, sink).model, kAblationLabels[0]);
  log::info("ablation: sft from base");
  report.rows[1] = eval(run_sft(base, data.sft_examples, sft, sink).model, kAblationLabels[1]);
  report.rows[2] = eval(m_cpt, kAblationLabels[2]);
  report.rows[3] = eval(base, kAblationLabels[3]);
  log::info("ablation: without ntp");
  report.rows[4] = eval(run_sft(m_cpt, data.sft_examples, with_terms(false, true), sink).model, kAblationLabels[4]);
  log::info("ablation: without dp");
  report.rows[5] = eval(run_sft(m_cpt, data.sft_examples, with_terms(true, false), sink).model, kAblationLabels[5]);
  log::info("ablation: rank loss only");
  const StageResult rank_only = run_sft(m_cpt, data.sft_examples, with_terms(false, false), sink);
  report.rows[6] = eval(rank_only.model, kAblationLabels[6]);

  log::info("ablation: alpha = 1 control");
  StageConfig alpha_one = with_terms(true, true);
  alpha_one.sft.alpha = 1.0;
  const StageResult control = run_sft(m_cpt, data.sft_examples, alpha_one, sink);
  report.alpha_one_steps = control.steps.size();
  for (std::size_t i = 0; i < control.steps.size(); ++i) {
    report.alpha_one_max_step_diff =
        std::max(report.alpha_one_max_step_diff, std::abs(control.steps[i].loss - rank_only.steps[i].loss));
  }
  return report;
}

}  // namespace tsarank
