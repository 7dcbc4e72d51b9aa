#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nlidb/seq_model.hpp"

namespace nlidb {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "nlidb-checkpoint";

using nlohmann::json;

json config_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"embed_dim", c.embed_dim},
          {"type_dim", c.type_dim},             {"encoder_hidden", c.encoder_hidden},
          {"encoder_layers", c.encoder_layers}, {"decoder_hidden", c.decoder_hidden},
          {"attention_dim", c.attention_dim},   {"max_symbol_index", c.max_symbol_index}};
}

ModelConfig config_of(const json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.type_dim = j.value("type_dim", c.type_dim);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.max_symbol_index = j.value("max_symbol_index", c.max_symbol_index);
  return c;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

static_assert(std::endian::native == std::endian::little, "checkpoints are written little-endian");

} // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig config_from_json(const std::string& text) {
  try {
    return config_of(json::parse(text));
  } catch (const json::exception& e) {
    throw ModelError(std::string("bad model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json manifest = json::array();
  ckpt.params.visit([&](const std::string& name, const Mat<double>& m) {
    manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  json header = {{"format", kFormatName},
                 {"version", kFormatVersion},
                 {"vocab_hash", hex64(ckpt.vocab_hash)},
                 {"config", config_json(ckpt.config)},
                 {"tensors", manifest}};
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CheckpointError("cannot write " + path.string());
  }
  out << header.dump() << '\n';
  ckpt.params.visit([&](const std::string&, const Mat<double>& m) {
    // Eigen stores column-major; the manifest order and layout are fixed.
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) {
    throw CheckpointError("write failed for " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint " + path.string());
  }
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  if (header.value("format", "") != kFormatName || header.value("version", 0) != kFormatVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint format");
  }
  Checkpoint ckpt;
  ckpt.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
  if (expected_vocab_hash != 0 && ckpt.vocab_hash != expected_vocab_hash) {
    throw CheckpointError(path.string() + ": vocabulary hash " + hex64(ckpt.vocab_hash) +
                          " does not match " + hex64(expected_vocab_hash));
  }
  ckpt.config = config_of(header.at("config"));
  try {
    ckpt.params = ModelParams<double>::zeros(ckpt.config);
  } catch (const ModelError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  const auto& manifest = header.at("tensors");
  std::size_t k = 0;
  ckpt.params.visit([&](const std::string& name, Mat<double>& m) {
    if (k >= manifest.size() || manifest[k].at("name") != name || manifest[k].at("rows") != m.rows() ||
        manifest[k].at("cols") != m.cols()) {
      throw CheckpointError(path.string() + ": tensor " + name + " missing or misshapen");
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) {
      throw CheckpointError(path.string() + ": truncated at tensor " + name);
    }
    ++k;
  });
  if (k != manifest.size() || in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path.string() + ": trailing data");
  }
  return ckpt;
}

} // namespace nlidb
