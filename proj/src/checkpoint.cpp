#include "tsarank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tsarank/error.hpp"

namespace tsarank {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'R', 'K', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::CorruptCheckpoint, path + ": truncated header");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

void describe_mismatch(const LmConfig& stored, const LmConfig& expected, const std::string& path) {
  auto check = [&](const char* field, std::size_t have, std::size_t want) {
    if (have != want) {
      throw Error(ErrorCode::ConfigMismatch, path + ": checkpoint declares " + field + " " + std::to_string(have) +
                                                 ", expected " + std::to_string(want));
    }
  };
  check("vocab_size", stored.vocab_size, expected.vocab_size);
  check("num_layers", stored.num_layers, expected.num_layers);
  check("model_dim", stored.model_dim, expected.model_dim);
  check("num_heads", stored.num_heads, expected.num_heads);
  check("ffn_dim", stored.ffn_dim, expected.ffn_dim);
  check("max_sequence_length", stored.max_sequence_length, expected.max_sequence_length);
  if (stored.positional != expected.positional) {
    throw Error(ErrorCode::ConfigMismatch, path + ": checkpoint declares positional " +
                                               std::string(to_string(stored.positional)) + ", expected " +
                                               std::string(to_string(expected.positional)));
  }
}

}  // namespace

nlohmann::json to_json(const LmConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"num_layers", c.num_layers},
          {"model_dim", c.model_dim},
          {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},
          {"max_sequence_length", c.max_sequence_length},
          {"positional", std::string(to_string(c.positional))}};
}

LmConfig lm_config_from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
  c.positional = positional_encoding_from(j.value("positional", std::string("learned")));
  return c;
}

void save_checkpoint(const LmCheckpoint& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = to_json(model.config());
  header["stage"] = std::string(to_string(model.stage()));
  const auto& meta = model.metadata();
  header["metadata"] = {{"seed", meta.seed},
                        {"epochs", meta.epochs},
                        {"steps", meta.steps},
                        {"data_fingerprint", meta.data_fingerprint}};
  auto manifest = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", total}});
    total += p.value.size();
  }
  header["parameters"] = manifest;
  header["value_count"] = total;

  const std::string header_text = header.dump();
  std::string blob;
  blob.reserve(sizeof(kMagic) + 12 + header_text.size() + total * sizeof(double));
  blob.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kCheckpointVersion);
  put<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  for (const auto& p : model.parameters())
    for (double v : p.value.values()) put<double>(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

LmCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<LmConfig>& expected) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + where);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, where + ": not a tsarank checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(data, pos, where);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::FormatVersion, where + ": format version " + std::to_string(version) +
                                              ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = take<std::uint64_t>(data, pos, where);
  if (pos + header_len > data.size()) throw Error(ErrorCode::CorruptCheckpoint, where + ": truncated header");

  nlohmann::json header;
  LmConfig config;
  Stage stage;
  TrainingMetadata meta;
  std::vector<std::pair<std::string, Shape>> declared;
  std::size_t value_count = 0;
  try {
    header = nlohmann::json::parse(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                   data.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    config = lm_config_from_json(header.at("config"));
    stage = stage_from(header.at("stage").get<std::string>());
    const auto& m = header.at("metadata");
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.epochs = m.at("epochs").get<std::size_t>();
    meta.steps = m.at("steps").get<std::size_t>();
    meta.data_fingerprint = m.at("data_fingerprint").get<std::string>();
    for (const auto& p : header.at("parameters")) {
      declared.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
    value_count = header.at("value_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, where + ": malformed header: " + e.what());
  }
  pos += header_len;

  if (expected) describe_mismatch(config, *expected, where);

  const auto manifest = parameter_manifest(config);
  if (manifest != declared) {
    throw Error(ErrorCode::ConfigMismatch,
                where + ": parameter manifest does not match the one implied by the stored config");
  }
  std::size_t implied = 0;
  for (const auto& [name, shape] : manifest) implied += shape_size(shape);
  if (implied != value_count) {
    throw Error(ErrorCode::ConfigMismatch, where + ": header declares " + std::to_string(value_count) +
                                               " values, manifest implies " + std::to_string(implied));
  }
  const std::size_t payload = data.size() - pos;
  if (payload != value_count * sizeof(double)) {
    throw Error(ErrorCode::CorruptCheckpoint, where + ": payload holds " + std::to_string(payload) + " bytes, expected " +
                                                  std::to_string(value_count * sizeof(double)));
  }

  std::vector<NamedParameter> params;
  params.reserve(manifest.size());
  for (const auto& [name, shape] : manifest) {
    std::vector<double> values(shape_size(shape));
    std::memcpy(values.data(), data.data() + pos, values.size() * sizeof(double));
    pos += values.size() * sizeof(double);
    params.push_back({name, Tensor::from(shape, std::move(values))});
  }
  return LmCheckpoint::assemble(config, std::move(params), stage, std::move(meta));
}

}  // namespace tsarank
