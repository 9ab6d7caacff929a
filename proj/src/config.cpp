#include "tsarank/config.hpp"

#include <fstream>

#include "tsarank/checkpoint.hpp"
#include "tsarank/error.hpp"
#include "tsarank/hash.hpp"
#include "tsarank/rng.hpp"

namespace tsarank {

using nlohmann::json;

namespace {

json stage_json(const StageConfig& c, bool sft) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"clip_norm", c.clip_norm},
            {"trainable_layers", c.freeze.top_half           ? json("half")
                                 : c.freeze.trainable_layers ? json(*c.freeze.trainable_layers)
                                                             : json("all")},
            {"train_embeddings", c.freeze.train_embeddings},
            {"train_head", c.freeze.train_head}};
  if (sft) {
    j["temperature"] = c.sft.temperature;
    j["alpha"] = c.sft.alpha;
    j["negatives"] = c.sft.negatives;
    j["use_ntp"] = c.terms.ntp;
    j["use_dp"] = c.terms.dp;
  }
  return j;
}

StageConfig stage_from(const json& j, bool sft) {
  StageConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  const json& tl = j.at("trainable_layers");
  if (tl.is_string()) {
    const auto v = tl.get<std::string>();
    if (v == "half") {
      c.freeze.top_half = true;
    } else if (v != "all") {
      throw Error(ErrorCode::ConfigValidation, "trainable_layers must be a count, \"half\" or \"all\"");
    }
  } else {
    c.freeze.trainable_layers = tl.get<std::size_t>();
  }
  c.freeze.train_embeddings = j.at("train_embeddings").get<bool>();
  c.freeze.train_head = j.at("train_head").get<bool>();
  if (sft) {
    c.sft.temperature = j.at("temperature").get<double>();
    c.sft.alpha = j.at("alpha").get<double>();
    c.sft.negatives = j.at("negatives").get<std::size_t>();
    c.terms.ntp = j.at("use_ntp").get<bool>();
    c.terms.dp = j.at("use_dp").get<bool>();
  }
  return c;
}

json synth_json(const SynthParams& p) {
  return {{"letters", p.letters},
          {"digits", p.digits},
          {"doc_length", p.doc_length},
          {"query_length", p.query_length},
          {"weak_pairs", p.weak_pairs},
          {"corpus_size", p.corpus_size},
          {"train_queries", p.train_queries},
          {"eval_queries", p.eval_queries},
          {"noise_rate", p.noise_rate},
          {"ranking_noise_rate", p.ranking_noise_rate},
          {"weak_mode", std::string(to_string(p.weak_mode))},
          {"ranking_mode", std::string(to_string(p.ranking_mode))},
          {"distractors_per_query", p.distractors_per_query}};
}

SynthParams synth_from(const json& j) {
  SynthParams p;
  p.letters = j.at("letters").get<std::string>();
  p.digits = j.at("digits").get<std::string>();
  p.doc_length = j.at("doc_length").get<std::size_t>();
  p.query_length = j.at("query_length").get<std::size_t>();
  p.weak_pairs = j.at("weak_pairs").get<std::size_t>();
  p.corpus_size = j.at("corpus_size").get<std::size_t>();
  p.train_queries = j.at("train_queries").get<std::size_t>();
  p.eval_queries = j.at("eval_queries").get<std::size_t>();
  p.noise_rate = j.at("noise_rate").get<double>();
  p.ranking_noise_rate = j.at("ranking_noise_rate").get<double>();
  p.weak_mode = query_mode_from(j.at("weak_mode").get<std::string>());
  p.ranking_mode = query_mode_from(j.at("ranking_mode").get<std::string>());
  p.distractors_per_query = j.at("distractors_per_query").get<std::size_t>();
  return p;
}

// Every key of `given` must exist in `known`, recursively through objects.
void reject_unknown_keys(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object() || !known.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.contains(it.key())) throw Error(ErrorCode::ConfigValidation, "unknown config key '" + path + "'");
    reject_unknown_keys(it.value(), known.at(it.key()), path);
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.model.max_sequence_length = 80;
  c.cpt.freeze = FreezePolicy::all();
  c.cpt.learning_rate = 1e-3;
  c.sft.freeze = FreezePolicy::sft_default();
  c.sft.learning_rate = 1e-3;
  c.derive_seeds();
  return c;
}

void RunConfig::derive_seeds() {
  cpt.seed = derive_seed(seed, "cpt");
  sft.seed = derive_seed(seed, "sft");
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"model", tsarank::to_json(model)},
          {"synth", synth_json(synth)},
          {"cpt", stage_json(cpt, false)},
          {"sft", stage_json(sft, true)},
          {"mining", {{"top_k", mining.top_k}, {"k1", mining.bm25.k1}, {"b", mining.bm25.b}}},
          {"eval",
           {{"k", eval.k},
            {"candidates", eval.candidates},
            {"generation_docs", eval.generation_docs},
            {"generation_max_len", eval.generation_max_len}}},
          {"sweep", {{"m", sweep.m}, {"alpha", sweep.alpha}, {"cpt_fractions", sweep.cpt_fractions}}},
          {"data_dir", data_dir}};
}

RunConfig RunConfig::from_json(const json& j) {
  try {
    RunConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.model = lm_config_from_json(j.at("model"));
    c.synth = synth_from(j.at("synth"));
    c.cpt = stage_from(j.at("cpt"), false);
    c.sft = stage_from(j.at("sft"), true);
    const json& mining = j.at("mining");
    c.mining.top_k = mining.at("top_k").get<std::size_t>();
    c.mining.bm25 = {mining.at("k1").get<double>(), mining.at("b").get<double>()};
    const json& ev = j.at("eval");
    c.eval.k = ev.at("k").get<std::size_t>();
    c.eval.candidates = ev.at("candidates").get<std::size_t>();
    c.eval.generation_docs = ev.at("generation_docs").get<std::size_t>();
    c.eval.generation_max_len = ev.at("generation_max_len").get<std::size_t>();
    c.eval.bm25 = c.mining.bm25;
    const json& sw = j.at("sweep");
    c.sweep.m = sw.at("m").get<std::vector<std::size_t>>();
    c.sweep.alpha = sw.at("alpha").get<std::vector<double>>();
    c.sweep.cpt_fractions = sw.at("cpt_fractions").get<std::vector<double>>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.derive_seeds();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigValidation, std::string("config: ") + e.what());
  }
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigValidation, m); };
  model.validate();
  synth.validate();
  cpt.validate(model);
  sft.validate(model);
  if (mining.top_k < 1) fail("mining.top_k must be >= 1");
  if (!(mining.bm25.k1 >= 0.0)) fail("mining.k1 must be >= 0");
  if (!(mining.bm25.b >= 0.0 && mining.bm25.b <= 1.0)) fail("mining.b must lie in [0, 1]");
  if (mining.top_k < sft.sft.negatives) {
    fail("mining.top_k " + std::to_string(mining.top_k) + " is smaller than sft.negatives " +
         std::to_string(sft.sft.negatives));
  }
  if (eval.k < 1) fail("eval.k must be >= 1");
  if (eval.candidates < 1) fail("eval.candidates must be >= 1");
  if (eval.generation_max_len < 1) fail("eval.generation_max_len must be >= 1");
  for (double a : sweep.alpha)
    if (!(a >= 0.0 && a <= 1.0)) fail("sweep.alpha values must lie in [0, 1]");
  for (std::size_t m : sweep.m)
    if (m < 1) fail("sweep.m values must be >= 1");
  for (double f : sweep.cpt_fractions)
    if (!(f > 0.0 && f <= 1.0)) fail("sweep.cpt_fractions values must lie in (0, 1]");
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed) {
  const json known = RunConfig::defaults().to_json();
  json merged = known;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path->string());
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ConfigValidation, "config " + path->string() + ": " + e.what());
    }
    if (!user.is_object()) throw Error(ErrorCode::ConfigValidation, "config root must be a JSON object");
    reject_unknown_keys(user, known, "");
    merged.merge_patch(user);
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::ConfigValidation, "override '" + ov + "' is not of the form key.path=value");
    }
    const std::string key = ov.substr(0, eq);
    std::string pointer = "/" + key;
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const json::json_pointer ptr(pointer);
    if (!known.contains(ptr)) throw Error(ErrorCode::ConfigValidation, "unknown config key '" + key + "'");
    merged[ptr] = parse_override_value(ov.substr(eq + 1));
  }
  if (seed) merged["seed"] = *seed;
  RunConfig config = RunConfig::from_json(merged);
  config.validate();
  return config;
}

}  // namespace tsarank
