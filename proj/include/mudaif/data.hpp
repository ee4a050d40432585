// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudaif/model.hpp"
#include "mudaif/vta.hpp"

namespace mudaif::data {

enum class ShapeKind { Circle, Square, Triangle };
enum class Color { Red, Green, Blue, Yellow, Cyan, Magenta, White, Orange };
enum class Relation { Above, LeftOf };

std::string name_of(ShapeKind shape);
std::string name_of(Color color);
std::array<std::uint8_t, 3> rgb_of(Color color);
ShapeKind shape_from_name(const std::string& name);
Color color_from_name(const std::string& name);

inline constexpr std::size_t kGridCells = 4;  // 2×2 placement grid

struct SceneObject {
  ShapeKind shape;
  Color color;
  std::size_t cell;  // raster index into the 2×2 grid
  int jitter_x = 0;
  int jitter_y = 0;
};

/// Objects sorted by cell, each in a distinct cell.
struct Scene {
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<SceneObject> objects;
};

/// What a caption states about a scene: objects in raster order and the
/// relation between each consecutive pair.
struct SceneDescription {
  std::vector<std::pair<Color, ShapeKind>> objects;
  std::vector<Relation> relations;

  bool operator==(const SceneDescription&) const = default;
};

enum class Grammar { Caption, Qa };

struct SyntheticSceneSpec {
  std::size_t canvas_min = 32;
  std::size_t canvas_max = 32;
  std::vector<ShapeKind> shapes{ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle};
  std::vector<Color> colors{Color::Red,  Color::Green,   Color::Blue,  Color::Yellow,
                            Color::Cyan, Color::Magenta, Color::White, Color::Orange};
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  Grammar grammar = Grammar::Caption;
  double test_fraction = 0.0;

  void validate() const;
};

nlohmann::json to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec scene_spec_from_json(const nlohmann::json& j, const std::string& path = "$");

Scene sample_scene(const SyntheticSceneSpec& spec, std::mt19937_64& rng);
/// Hard-edged rendering on a black canvas; 8-bit RGB, row-major.
std::vector<std::uint8_t> render(const Scene& scene);
SceneDescription describe(const Scene& scene);
std::string caption_of(const Scene& scene);
/// Inverse of caption_of on descriptions; throws ParseError on malformed text.
SceneDescription parse_caption(const std::string& caption);

struct Question {
  std::string prompt;
  std::string answer;
};

/// Picks a question whose answer is uniquely determined by the scene.
Question sample_question(const Scene& scene, std::mt19937_64& rng);

struct DatasetRecord {
  std::string image;  // path relative to the manifest directory
  std::string caption;
  std::optional<std::string> prompt;
  std::string split = "train";
};

nlohmann::json to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j, const std::string& where);

/// Writes `n` PPM images and manifest.jsonl under `dir`. A pure function of
/// (spec, n, seed); record i uses a seed derived from (seed, i).
std::filesystem::path generate_dataset(const SyntheticSceneSpec& spec, std::size_t n,
                                       std::uint64_t seed, const std::filesystem::path& dir);

struct Manifest {
  std::filesystem::path directory;
  std::vector<DatasetRecord> records;
};

Manifest read_manifest(const std::filesystem::path& path);

// Binary PPM (P6), maxval 255.
std::string encode_ppm(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& rgb);
void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& rgb);
ImageTensor decode_ppm(const std::string& bytes);
ImageTensor load_image(const std::filesystem::path& path);

/// Word-level vocabulary with reserved ids 0=pad, 1=bos, 2=eos.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Sorted unique whitespace-separated words of `sentences`, after the reserved ids.
  static Vocabulary build(const std::vector<std::string>& sentences);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  TokenId id(const std::string& word) const;
  /// Throws IndexError on words outside the vocabulary.
  std::vector<TokenId> encode(const std::string& sentence) const;
  /// Joins with single spaces. Ids beyond the vocabulary render as <unused:ID>.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

Vocabulary build_vocab(const std::vector<DatasetRecord>& records);

/// Whitespace split used by the tokenizer.
std::vector<std::string> split_words(const std::string& sentence);

}  // namespace mudaif::data
