// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mudaif/data.hpp"
#include "mudaif/errors.hpp"
#include "mudaif/json_read.hpp"

namespace mudaif::data {

namespace {

constexpr std::array<const char*, 3> kShapeNames{"circle", "square", "triangle"};
constexpr std::array<const char*, 8> kColorNames{"red",  "green",   "blue",  "yellow",
                                                 "cyan", "magenta", "white", "orange"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
T pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

bool covers(ShapeKind shape, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  switch (shape) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square:
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case ShapeKind::Triangle: {
      const double depth = dy + r;  // distance below the apex
      return depth >= 0.0 && depth <= 2.0 * r && std::abs(dx) <= 0.5 * depth;
    }
  }
  return false;
}

}  // namespace

std::string name_of(ShapeKind shape) { return kShapeNames[static_cast<std::size_t>(shape)]; }
std::string name_of(Color color) { return kColorNames[static_cast<std::size_t>(color)]; }

std::array<std::uint8_t, 3> rgb_of(Color color) {
  switch (color) {
    case Color::Red: return {255, 0, 0};
    case Color::Green: return {0, 255, 0};
    case Color::Blue: return {0, 0, 255};
    case Color::Yellow: return {255, 255, 0};
    case Color::Cyan: return {0, 255, 255};
    case Color::Magenta: return {255, 0, 255};
    case Color::White: return {255, 255, 255};
    case Color::Orange: return {255, 128, 0};
  }
  return {0, 0, 0};
}

ShapeKind shape_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (name == kShapeNames[i]) return static_cast<ShapeKind>(i);
  throw ParseError("unknown shape '" + name + "'");
}

Color color_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kColorNames.size(); ++i)
    if (name == kColorNames[i]) return static_cast<Color>(i);
  throw ParseError("unknown color '" + name + "'");
}

void SyntheticSceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("scene spec: " + what); };
  if (canvas_min < 2 || canvas_max < canvas_min) fail("need 2 <= canvas_min <= canvas_max");
  if (shapes.empty()) fail("shape set is empty");
  if (colors.empty()) fail("color set is empty");
  if (min_objects < 1 || max_objects < min_objects || max_objects > kGridCells) {
    fail("need 1 <= min_objects <= max_objects <= 4");
  }
  if (test_fraction < 0.0 || test_fraction > 1.0) fail("test_fraction must lie in [0, 1]");
}

nlohmann::json to_json(const SyntheticSceneSpec& spec) {
  std::vector<std::string> shapes, colors;
  for (auto s : spec.shapes) shapes.push_back(name_of(s));
  for (auto c : spec.colors) colors.push_back(name_of(c));
  return {{"canvas_min", spec.canvas_min},
          {"canvas_max", spec.canvas_max},
          {"shapes", shapes},
          {"colors", colors},
          {"min_objects", spec.min_objects},
          {"max_objects", spec.max_objects},
          {"grammar", spec.grammar == Grammar::Caption ? "caption" : "qa"},
          {"test_fraction", spec.test_fraction}};
}

SyntheticSceneSpec scene_spec_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace json_read;
  require_object(j, path);
  reject_unknown(j, path,
                 {"canvas_min", "canvas_max", "shapes", "colors", "min_objects", "max_objects",
                  "grammar", "test_fraction"});
  SyntheticSceneSpec s;
  if (j.contains("canvas_min")) s.canvas_min = get_count(j["canvas_min"], path + ".canvas_min");
  if (j.contains("canvas_max")) s.canvas_max = get_count(j["canvas_max"], path + ".canvas_max");
  if (j.contains("min_objects")) s.min_objects = get_count(j["min_objects"], path + ".min_objects");
  if (j.contains("max_objects")) s.max_objects = get_count(j["max_objects"], path + ".max_objects");
  if (j.contains("test_fraction")) {
    s.test_fraction = get_number(j["test_fraction"], path + ".test_fraction");
  }
  auto names = [&](const char* key) {
    const auto& arr = j[key];
    if (!arr.is_array()) throw ConfigError(path + "." + key + ": expected an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(get_string(arr[i], path + "." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
  };
  try {
    if (j.contains("shapes")) {
      s.shapes.clear();
      for (const auto& n : names("shapes")) s.shapes.push_back(shape_from_name(n));
    }
    if (j.contains("colors")) {
      s.colors.clear();
      for (const auto& n : names("colors")) s.colors.push_back(color_from_name(n));
    }
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (j.contains("grammar")) {
    const auto g = get_string(j["grammar"], path + ".grammar");
    if (g == "caption") s.grammar = Grammar::Caption;
    else if (g == "qa") s.grammar = Grammar::Qa;
    else throw ConfigError(path + ".grammar: expected caption or qa");
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

Scene sample_scene(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Scene scene;
  std::uniform_int_distribution<std::size_t> side(spec.canvas_min, spec.canvas_max);
  scene.height = side(rng);
  scene.width = side(rng);
  std::uniform_int_distribution<std::size_t> count(spec.min_objects, spec.max_objects);
  const std::size_t k = count(rng);
  std::vector<std::size_t> cells{0, 1, 2, 3};
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.resize(k);
  std::sort(cells.begin(), cells.end());
  const int jitter =
      static_cast<int>(std::min(scene.height, scene.width) / 2 / 10);  // 10% of a cell
  std::uniform_int_distribution<int> shift(-jitter, jitter);
  for (auto cell : cells) {
    SceneObject o{pick(spec.shapes, rng), pick(spec.colors, rng), cell};
    o.jitter_x = shift(rng);
    o.jitter_y = shift(rng);
    scene.objects.push_back(o);
  }
  return scene;
}

std::vector<std::uint8_t> render(const Scene& scene) {
  const std::size_t h = scene.height, w = scene.width;
  std::vector<std::uint8_t> rgb(h * w * 3, 0);
  const double cell_h = static_cast<double>(h) / 2.0, cell_w = static_cast<double>(w) / 2.0;
  const double r = 0.35 * std::min(cell_h, cell_w);
  for (const auto& o : scene.objects) {
    const double cy = (static_cast<double>(o.cell / 2) + 0.5) * cell_h + o.jitter_y;
    const double cx = (static_cast<double>(o.cell % 2) + 0.5) * cell_w + o.jitter_x;
    const auto color = rgb_of(o.color);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!covers(o.shape, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, cx, cy, r))
          continue;
        std::copy(color.begin(), color.end(), rgb.begin() + (y * w + x) * 3);
      }
    }
  }
  return rgb;
}

SceneDescription describe(const Scene& scene) {
  SceneDescription d;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    d.objects.emplace_back(o.color, o.shape);
    if (i > 0) {
      const auto& prev = scene.objects[i - 1];
      d.relations.push_back(prev.cell / 2 != o.cell / 2 ? Relation::Above : Relation::LeftOf);
    }
  }
  return d;
}

std::string caption_of(const Scene& scene) {
  const auto d = describe(scene);
  std::string out;
  for (std::size_t i = 0; i < d.objects.size(); ++i) {
    if (i > 0) out += d.relations[i - 1] == Relation::Above ? " above " : " left of ";
    out += "a " + name_of(d.objects[i].first) + " " + name_of(d.objects[i].second);
  }
  return out;
}

SceneDescription parse_caption(const std::string& caption) {
  const auto words = split_words(caption);
  SceneDescription d;
  std::size_t i = 0;
  auto expect_object = [&] {
    if (i + 3 > words.size() || words[i] != "a") {
      throw ParseError("caption '" + caption + "': expected 'a <color> <shape>' at word " +
                       std::to_string(i));
    }
    d.objects.emplace_back(color_from_name(words[i + 1]), shape_from_name(words[i + 2]));
    i += 3;
  };
  expect_object();
  while (i < words.size()) {
    if (words[i] == "above") {
      d.relations.push_back(Relation::Above);
      i += 1;
    } else if (words[i] == "left" && i + 1 < words.size() && words[i + 1] == "of") {
      d.relations.push_back(Relation::LeftOf);
      i += 2;
    } else {
      throw ParseError("caption '" + caption + "': expected a relation at word " +
                       std::to_string(i));
    }
    expect_object();
  }
  return d;
}

Question sample_question(const Scene& scene, std::mt19937_64& rng) {
  std::vector<Question> options;
  for (const auto& o : scene.objects) {
    const auto same_shape = std::count_if(scene.objects.begin(), scene.objects.end(),
                                          [&](const auto& x) { return x.shape == o.shape; });
    const auto same_color = std::count_if(scene.objects.begin(), scene.objects.end(),
                                          [&](const auto& x) { return x.color == o.color; });
    if (same_shape == 1) {
      options.push_back({"what color is the " + name_of(o.shape) + "?", name_of(o.color)});
    }
    if (same_color == 1) {
      options.push_back({"what shape is the " + name_of(o.color) + " object?", name_of(o.shape)});
    }
  }
  if (options.empty()) {
    // Every shape and every color repeats; counting is always answerable.
    options.push_back({"how many objects are there?", std::to_string(scene.objects.size())});
  }
  return pick(options, rng);
}

nlohmann::json to_json(const DatasetRecord& r) {
  nlohmann::json j{{"image", r.image}, {"caption", r.caption}, {"split", r.split}};
  if (r.prompt) j["prompt"] = *r.prompt;
  return j;
}

DatasetRecord record_from_json(const nlohmann::json& j, const std::string& where) {
  using namespace json_read;
  try {
    require_object(j, where);
    reject_unknown(j, where, {"image", "caption", "prompt", "split"});
    if (!j.contains("image") || !j.contains("caption")) {
      throw ConfigError(where + ": records need 'image' and 'caption'");
    }
    DatasetRecord r;
    r.image = get_string(j["image"], where + ".image");
    r.caption = get_string(j["caption"], where + ".caption");
    if (j.contains("prompt")) r.prompt = get_string(j["prompt"], where + ".prompt");
    if (j.contains("split")) r.split = get_string(j["split"], where + ".split");
    return r;
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
}

std::filesystem::path generate_dataset(const SyntheticSceneSpec& spec, std::size_t n,
                                       std::uint64_t seed, const std::filesystem::path& dir) {
  spec.validate();
  if (n < 1) throw ConfigError("dataset size must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  const auto manifest_path = dir / "manifest.jsonl";
  std::ofstream manifest(manifest_path, std::ios::binary | std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + manifest_path.string());
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(i)));
    const Scene scene = sample_scene(spec, rng);
    std::ostringstream name;
    name << "images/" << std::setw(6) << std::setfill('0') << i << ".ppm";
    write_ppm(dir / name.str(), scene.height, scene.width, render(scene));
    DatasetRecord record;
    record.image = name.str();
    if (spec.grammar == Grammar::Qa) {
      const auto q = sample_question(scene, rng);
      record.prompt = q.prompt;
      record.caption = q.answer;
    } else {
      record.caption = caption_of(scene);
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    record.split = unit(rng) < spec.test_fraction ? "test" : "train";
    manifest << to_json(record).dump() << '\n';
  }
  manifest.flush();
  if (!manifest) throw IoError("failed writing " + manifest_path.string());
  return manifest_path;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.directory = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    m.records.push_back(record_from_json(j, where));
  }
  return m;
}

}  // namespace mudaif::data
