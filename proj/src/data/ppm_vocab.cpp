// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "mudaif/data.hpp"
#include "mudaif/errors.hpp"

namespace mudaif::data {

std::string encode_ppm(std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != height * width * 3) {
    throw ShapeError("ppm: expected " + std::to_string(height * width * 3) + " bytes, got " +
                     std::to_string(rgb.size()));
  }
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(rgb.begin(), rgb.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& rgb) {
  const auto bytes = encode_ppm(height, width, rgb);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1'000'000) fail(std::string(what) + " is implausibly large", start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return value;
  }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw ParseError("ppm: " + what + " at byte " + std::to_string(at));
  }

  std::size_t pos_ = 0;
  const std::string& bytes_;
};

}  // namespace

ImageTensor decode_ppm(const std::string& bytes) {
  HeaderReader r(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') r.fail("missing P6 magic", 0);
  r.pos_ = 2;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) r.fail("zero image extent", r.pos_);
  if (maxval != 255) r.fail("only maxval 255 is supported", r.pos_);
  if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_]))) {
    r.fail("expected whitespace after header", r.pos_);
  }
  const std::size_t start = r.pos_ + 1;
  const std::size_t need = height * width * 3;
  if (bytes.size() - start < need) {
    r.fail("truncated pixel data (" + std::to_string(bytes.size() - start) + " of " +
               std::to_string(need) + " bytes)",
           bytes.size());
  }
  std::vector<double> rgb(need);
  for (std::size_t i = 0; i < need; ++i) {
    rgb[i] = static_cast<double>(static_cast<unsigned char>(bytes[start + i])) / 255.0;
  }
  return ImageTensor::from_pixels(height, width, std::move(rgb));
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> split_words(const std::string& sentence) {
  std::istringstream in(sentence);
  std::vector<std::string> words{std::istream_iterator<std::string>(in),
                                 std::istream_iterator<std::string>()};
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[0] != "<pad>" || tokens_[1] != "<bos>" ||
      tokens_[2] != "<eos>") {
    throw ConfigError("vocabulary must start with <pad>, <bos>, <eos>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("vocabulary token '" + tokens_[i] + "' appears twice");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& sentences) {
  std::set<std::string> words;
  for (const auto& s : sentences)
    for (auto& w : split_words(s)) words.insert(std::move(w));
  std::vector<std::string> tokens{"<pad>", "<bos>", "<eos>"};
  for (const auto& w : words) {
    if (w != "<pad>" && w != "<bos>" && w != "<eos>") tokens.push_back(w);
  }
  return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  if (it == index_.end()) throw IndexError("word '" + word + "' is not in the vocabulary");
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::string& sentence) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(sentence)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    const auto t = ids[i];
    if (t >= 0 && static_cast<std::size_t>(t) < tokens_.size()) {
      out += tokens_[static_cast<std::size_t>(t)];
    } else {
      out += "<unused:" + std::to_string(t) + ">";
    }
  }
  return out;
}

Vocabulary build_vocab(const std::vector<DatasetRecord>& records) {
  std::vector<std::string> sentences;
  for (const auto& r : records) {
    sentences.push_back(r.caption);
    if (r.prompt) sentences.push_back(*r.prompt);
  }
  return Vocabulary::build(sentences);
}

}  // namespace mudaif::data
