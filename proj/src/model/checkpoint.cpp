// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include "mudaif/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mudaif/errors.hpp"

namespace mudaif {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'U', 'D', 'A', 'I', 'F', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                       std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string canonical_config(const ModelConfig& config, const data::Vocabulary& vocab) {
  nlohmann::json j{{"model", to_json(config)}, {"vocab", vocab.tokens()}};
  return j.dump();
}

std::string encode_checkpoint(const Model& model, const data::Vocabulary& vocab) {
  if (vocab.size() > model.config.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " tokens but the model only " + std::to_string(model.config.vocab_size));
  }
  std::string out(kMagic, sizeof(kMagic));
  const std::string config = canonical_config(model.config, vocab);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, fnv1a64(config));
  put<std::uint64_t>(out, config.size());
  out += config;
  const auto params = model.named_parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) put<std::uint64_t>(out, dim);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hash = r.get<std::uint64_t>("config hash");
  const auto config_len = r.get<std::uint64_t>("config length");
  const std::string config_text = r.take(config_len, "config");
  if (fnv1a64(config_text) != hash) throw ParseError("checkpoint config hash mismatch");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint config is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("model") || !j.contains("vocab") ||
      !j["vocab"].is_array()) {
    throw ParseError("checkpoint config lacks model or vocab");
  }
  const ModelConfig config = model_config_from_json(j["model"], "$.model");
  data::Vocabulary vocab(j["vocab"].get<std::vector<std::string>>());

  Checkpoint ck{Model::init(config, 0), std::move(vocab)};
  auto params = ck.model.named_parameters();
  const auto count = r.get<std::uint64_t>("tensor count");
  if (count != params.size()) {
    throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                     std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const std::string stored = r.take(name_len, "tensor name");
    if (stored != name) {
      throw ParseError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    }
    const auto rank = r.get<std::uint32_t>("tensor rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("tensor dims")));
    }
    if (shape != t.shape()) {
      throw ParseError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                       ", expected " + shape_str(t.shape()));
    }
    auto w = t.mutable_data();
    for (auto& v : w) v = r.get<double>("tensor values");
  }
  if (!r.done()) {
    throw ParseError("trailing bytes after checkpoint tensors at byte " + std::to_string(r.pos()));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const data::Vocabulary& vocab) {
  const auto bytes = encode_checkpoint(model, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mudaif
