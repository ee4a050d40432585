// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Exit status: 0 success, 1 runtime failure,
// 2 usage or configuration error. Results go to stdout, diagnostics to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mudaif/run.hpp"

namespace fs = std::filesystem;
using namespace mudaif;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const fs::path& path, const Tensor& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m.at(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& list) {
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto x = item.find('x');
    try {
      std::size_t used = 0;
      if (x == std::string::npos) {
        const auto s = std::stoul(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
        sizes.emplace_back(s, s);
      } else {
        sizes.emplace_back(std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1)));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--image-sizes: cannot parse '" + item + "' (use 64 or 48x80)");
    }
    if (sizes.back().first == 0 || sizes.back().second == 0) {
      throw ConfigError("--image-sizes: extents must be positive");
    }
  }
  if (sizes.empty()) throw ConfigError("--image-sizes: empty list");
  return sizes;
}

DecodeOptions decode_options(const std::string& name, double temperature, std::size_t top_k) {
  DecodeOptions o;
  o.strategy = decode_strategy_from_string(name);
  o.temperature = temperature;
  o.top_k = top_k;
  o.validate();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encoder-free vision-language model toolkit"};
  app.require_subcommand(1);

  // make-data
  auto* make_data = app.add_subcommand("make-data", "Generate a synthetic scene dataset");
  std::string spec_path, out_dir;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  make_data->add_option("--spec", spec_path, "Scene spec JSON file")->required();
  make_data->add_option("--n", n, "Number of records")->required();
  make_data->add_option("--seed", seed, "Random seed");
  make_data->add_option("--out", out_dir, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train from a run config");
  std::string config_path;
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  // generate
  auto* gen = app.add_subcommand("generate", "Decode text for an image");
  std::string checkpoint, image_path, prompt, decode = "greedy";
  double temperature = 1.0;
  std::size_t top_k = 0, max_new = 32;
  gen->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  gen->add_option("--image", image_path, "PPM image")->required();
  gen->add_option("--prompt", prompt, "Prompt text");
  gen->add_option("--decode", decode, "greedy, temperature or topk");
  gen->add_option("--temperature", temperature, "Sampling temperature");
  gen->add_option("--top-k", top_k, "Candidates kept by topk");
  gen->add_option("--max-new", max_new, "Maximum generated tokens");
  gen->add_option("--seed", seed, "Sampling seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Perplexity and exact match on a manifest split");
  std::string manifest, split = "test";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Manifest JSONL")->required();
  eval->add_option("--split", split, "Split tag, or 'all'");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--config", config_path, "Run config JSON")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Parameter, FLOP and timing comparison");
  std::string sizes = "64,128,224";
  std::size_t text_len = 16, repeats = 3;
  bench->add_option("--config", config_path, "Run config JSON")->required();
  bench->add_option("--image-sizes", sizes, "Comma-separated sizes, e.g. 64,128 or 48x80");
  bench->add_option("--text-len", text_len, "Text tokens per forward pass");
  bench->add_option("--repeats", repeats, "Timed forward passes per size");

  // inspect-attn
  auto* inspect = app.add_subcommand("inspect-attn", "Dump attention maps as CSV");
  std::string text;
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  inspect->add_option("--image", image_path, "PPM image")->required();
  inspect->add_option("--text", text, "Text after the begin-of-sequence token");
  inspect->add_option("--prompt", prompt, "Prompt text");
  inspect->add_option("--out", out_dir, "Directory for the CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*make_data) {
      std::ifstream in(spec_path);
      if (!in) throw ConfigError("--spec: cannot open " + spec_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("$: invalid JSON: ") + e.what());
      }
      const auto spec = data::scene_spec_from_json(j);
      std::cout << data::generate_dataset(spec, n, seed, out_dir).string() << "\n";
    } else if (*train_cmd) {
      const auto config = load_run_config(config_path);
      const auto result = run_training(config, out_dir);
      std::cout << summary_json(result).dump() << "\n";
    } else if (*gen) {
      const auto options = decode_options(decode, temperature, top_k);
      const auto ck = load_checkpoint(checkpoint);
      const auto image = data::load_image(image_path);
      const auto ids = ck.vocab.encode(prompt);
      std::cout << ck.vocab.decode(generate(ck.model, image, ids, options, max_new, seed))
                << "\n";
    } else if (*eval) {
      const auto ck = load_checkpoint(checkpoint);
      const auto m = data::read_manifest(manifest);
      const auto samples = load_samples(m, split, ck.vocab);
      if (samples.empty()) throw ConfigError("--split: no records in split '" + split + "'");
      std::cout << to_json(evaluate(ck.model, ck.vocab, samples)).dump() << "\n";
    } else if (*gc) {
      const auto run = run_grad_check(load_run_config(config_path));
      std::cout << nlohmann::json{{"max_rel_error", run.result.max_rel_error},
                                  {"worst_parameter", run.result.worst_parameter},
                                  {"worst_index", run.result.worst_index},
                                  {"analytic", run.result.analytic},
                                  {"numeric", run.result.numeric},
                                  {"checked", run.result.checked},
                                  {"parameters", run.parameters},
                                  {"seconds", run.seconds},
                                  {"passed", run.passed}}
                       .dump()
                << "\n";
      return run.passed ? 0 : kRuntime;
    } else if (*bench) {
      const auto config = load_run_config(config_path);
      const auto rows = run_bench(config.model, parse_sizes(sizes), text_len, repeats, config.seed);
      std::cout << "height,width,tokens,params,encoder_params,flops,encoder_flops,forward_ms\n";
      for (const auto& r : rows) {
        std::cout << r.height << ',' << r.width << ',' << r.cost.encoder_free.visual_tokens << ','
                  << r.cost.encoder_free.params << ',' << r.cost.encoder_based.params << ','
                  << r.cost.encoder_free.flops << ',' << r.cost.encoder_based.flops << ','
                  << format_double(r.forward_ms) << '\n';
      }
    } else if (*inspect) {
      const auto ck = load_checkpoint(checkpoint);
      const auto image = data::load_image(image_path);
      const auto ids = decoder_input(ck.vocab.encode(text));
      const auto prompt_ids = ck.vocab.encode(prompt);
      ForwardTrace trace;
      {
        NoGradGuard no_grad;
        forward(ck.model, image, ids, prompt_ids, &trace);
      }
      fs::create_directories(out_dir);
      nlohmann::json files = nlohmann::json::object();
      auto dump = [&](const std::string& name, const Tensor& t) {
        write_csv(fs::path(out_dir) / name, t);
        files[name] = {t.rows(), t.cols()};
      };
      dump("a_vt.csv", trace.visual_to_text);
      dump("a_tv.csv", trace.text_to_visual);
      for (std::size_t h = 0; h < trace.vta_attention.size(); ++h) {
        dump("vta_h" + std::to_string(h) + ".csv", trace.vta_attention[h]);
      }
      for (std::size_t l = 0; l < trace.decoder_attention.size(); ++l) {
        for (std::size_t h = 0; h < trace.decoder_attention[l].size(); ++h) {
          dump("decoder_l" + std::to_string(l) + "_h" + std::to_string(h) + ".csv",
               trace.decoder_attention[l][h]);
        }
      }
      std::cout << files.dump() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}
