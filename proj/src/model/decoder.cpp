// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mudaif/errors.hpp"
#include "mudaif/init.hpp"
#include "mudaif/model.hpp"

namespace mudaif {

namespace {

DecoderParams init_decoder(const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t d = c.d_model, hidden = c.ffn_mult * d, vocab = c.vocab_size;
  DecoderParams p;
  p.token_embedding = init::normal({vocab, d}, c.init_std, rng);
  p.position_embedding = init::normal({c.max_seq_len, d}, c.init_std, rng);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    DecoderLayerParams layer;
    layer.attn_norm_gain = Tensor::full({d}, 1.0, true);
    layer.attn_norm_shift = Tensor::zeros({d}, true);
    layer.w_query = init::normal({d, d}, init::fan_in_std(d), rng);
    layer.w_key = init::normal({d, d}, init::fan_in_std(d), rng);
    layer.w_value = init::normal({d, d}, init::fan_in_std(d), rng);
    layer.w_out = init::normal({d, d}, init::fan_in_std(d), rng);
    layer.ffn_norm_gain = Tensor::full({d}, 1.0, true);
    layer.ffn_norm_shift = Tensor::zeros({d}, true);
    layer.ffn_in = init::normal({d, hidden}, init::fan_in_std(d), rng);
    layer.ffn_in_bias = Tensor::zeros({hidden}, true);
    layer.ffn_out = init::normal({hidden, d}, init::fan_in_std(hidden), rng);
    layer.ffn_out_bias = Tensor::zeros({d}, true);
    p.layers.push_back(std::move(layer));
  }
  p.final_norm_gain = Tensor::full({d}, 1.0, true);
  p.final_norm_shift = Tensor::zeros({d}, true);
  if (!c.tie_embeddings) {
    p.head = c.zero_init_head ? Tensor::zeros({d, vocab}, true)
                              : init::normal({d, vocab}, init::fan_in_std(d), rng);
  }
  p.head_bias = Tensor::zeros({vocab}, true);
  return p;
}

Tensor self_attention(const Tensor& x, const DecoderLayerParams& layer, std::size_t heads,
                      const AttentionMask& mask, std::vector<Tensor>* maps) {
  Tensor q = matmul(x, layer.w_query);
  Tensor k = matmul(x, layer.w_key);
  Tensor v = matmul(x, layer.w_value);
  const std::size_t dh = x.cols() / heads;
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto r = heads == 1 ? scaled_dot_attention(q, k, v, &mask)
                        : scaled_dot_attention(slice_cols(q, h * dh, dh),
                                               slice_cols(k, h * dh, dh),
                                               slice_cols(v, h * dh, dh), &mask);
    if (maps) maps->push_back(r.weights);
    parts.push_back(r.output);
  }
  Tensor merged = heads == 1 ? parts[0] : concat_cols(parts);
  return matmul(merged, layer.w_out);
}

// Prefix rows [0, prefix) are mutually visible; later rows are causal and
// also see the whole prefix.
AttentionMask prefix_causal_mask(std::size_t total, std::size_t prefix) {
  AttentionMask m(total, total, false);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t visible = i < prefix ? prefix : i + 1;
    for (std::size_t j = 0; j < visible; ++j) m.set(i, j, true);
  }
  return m;
}

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.vocab_size == 0) throw ConfigError("model config: vocab_size must be set");
  std::mt19937_64 rng(seed);
  Model m;
  m.config = config;
  m.vta = VtaParams::init(config, rng);
  m.fusion = CoAttentionParams::init(config, rng);
  m.decoder = init_decoder(config, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  auto out = vta.named();
  for (auto& p : fusion.named()) out.push_back(std::move(p));
  out.emplace_back("decoder.token_embedding", decoder.token_embedding);
  out.emplace_back("decoder.position_embedding", decoder.position_embedding);
  for (std::size_t l = 0; l < decoder.layers.size(); ++l) {
    const auto& L = decoder.layers[l];
    const std::string pre = "decoder.layers." + std::to_string(l) + ".";
    out.emplace_back(pre + "attn_norm_gain", L.attn_norm_gain);
    out.emplace_back(pre + "attn_norm_shift", L.attn_norm_shift);
    out.emplace_back(pre + "w_query", L.w_query);
    out.emplace_back(pre + "w_key", L.w_key);
    out.emplace_back(pre + "w_value", L.w_value);
    out.emplace_back(pre + "w_out", L.w_out);
    out.emplace_back(pre + "ffn_norm_gain", L.ffn_norm_gain);
    out.emplace_back(pre + "ffn_norm_shift", L.ffn_norm_shift);
    out.emplace_back(pre + "ffn_in", L.ffn_in);
    out.emplace_back(pre + "ffn_in_bias", L.ffn_in_bias);
    out.emplace_back(pre + "ffn_out", L.ffn_out);
    out.emplace_back(pre + "ffn_out_bias", L.ffn_out_bias);
  }
  out.emplace_back("decoder.final_norm_gain", decoder.final_norm_gain);
  out.emplace_back("decoder.final_norm_shift", decoder.final_norm_shift);
  if (decoder.head.defined()) out.emplace_back("decoder.head", decoder.head);
  out.emplace_back("decoder.head_bias", decoder.head_bias);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : named_parameters()) n += t.size();
  return n;
}

void Model::zero_grad() {
  for (auto& [_, t] : named_parameters()) t.zero_grad();
}

Tensor forward(const Model& model, const ImageTensor& image, std::span<const TokenId> text,
               std::span<const TokenId> prompt, ForwardTrace* trace) {
  const auto& cfg = model.config;
  const auto& dec = model.decoder;
  if (dec.token_embedding.rows() != cfg.vocab_size) {
    throw ConfigError("token embedding has " + std::to_string(dec.token_embedding.rows()) +
                      " rows but config vocab_size is " + std::to_string(cfg.vocab_size));
  }
  if (text.empty() || text[0] != kBosId) {
    throw ContractError("text must start with the begin-of-sequence id");
  }

  PseudoTokens embedded = vta_embed(image, model.vta, cfg);
  const std::size_t n = embedded.count(), c = prompt.size(), l = text.size();
  if (n + c + l > cfg.max_seq_len) {
    throw LengthError("sequence of " + std::to_string(n) + " visual + " + std::to_string(c) +
                      " prompt + " + std::to_string(l) + " text rows exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  Tensor visual = vta_refine(embedded, model.vta, cfg, trace ? &trace->vta_attention : nullptr)
                      .tokens;

  Tensor text_emb = embedding(dec.token_embedding, text);
  Tensor prompt_emb;
  if (c) prompt_emb = embedding(dec.token_embedding, prompt);

  Tensor a_vt, a_tv = text_to_visual_weights(visual, text_emb, model.fusion);
  Tensor visual_rows, text_rows;
  if (cfg.fusion == FusionMode::StrictSum) {
    a_vt = visual_to_text_weights(visual, text_emb, model.fusion);
    visual_rows = fuse(a_vt, a_tv, text_emb, visual, FusionMode::StrictSum).matrix;
    text_rows = add(text_emb, matmul(a_tv, visual));
  } else {
    // Conditioning stream: everything on the text side that precedes decoding.
    Tensor bos = slice_rows(text_emb, 0, 1);
    Tensor context = c ? concat_rows(std::vector<Tensor>{prompt_emb, bos}) : bos;
    a_vt = visual_to_text_weights(visual, context, model.fusion);
    auto z = fuse(a_vt, a_tv, context, visual, FusionMode::Concat);
    visual_rows = add(visual, slice_rows(z.matrix, 0, n));
    text_rows = add(text_emb, slice_rows(z.matrix, n, l));
  }
  if (trace) {
    trace->visual_to_text = a_vt;
    trace->text_to_visual = a_tv;
    trace->visual_rows = n;
    trace->prompt_rows = c;
    trace->text_rows = l;
  }

  std::vector<Tensor> rows{visual_rows};
  if (c) rows.push_back(prompt_emb);
  rows.push_back(text_rows);
  const std::size_t total = n + c + l;
  Tensor x = add(concat_rows(rows), slice_rows(dec.position_embedding, 0, total));

  const AttentionMask mask = prefix_causal_mask(total, n + c);
  for (const auto& layer : dec.layers) {
    std::vector<Tensor>* maps = nullptr;
    if (trace) maps = &trace->decoder_attention.emplace_back();
    Tensor h = layer_norm(x, layer.attn_norm_gain, layer.attn_norm_shift);
    x = add(x, self_attention(h, layer, cfg.n_heads, mask, maps));
    h = layer_norm(x, layer.ffn_norm_gain, layer.ffn_norm_shift);
    h = gelu(add_row_vector(matmul(h, layer.ffn_in), layer.ffn_in_bias));
    x = add(x, add_row_vector(matmul(h, layer.ffn_out), layer.ffn_out_bias));
  }
  x = layer_norm(slice_rows(x, n + c, l), dec.final_norm_gain, dec.final_norm_shift);
  Tensor head = dec.head.defined() ? dec.head : transpose(dec.token_embedding);
  return add_row_vector(matmul(x, head), dec.head_bias);
}

std::vector<double> next_token_distribution(const Model& model, const ImageTensor& image,
                                            std::span<const TokenId> prefix,
                                            std::span<const TokenId> prompt) {
  NoGradGuard no_grad;
  Tensor logits = forward(model, image, prefix, prompt);
  Tensor probs = softmax_rows(slice_rows(logits, logits.rows() - 1, 1));
  return {probs.data().begin(), probs.data().end()};
}

DecodeStrategy decode_strategy_from_string(const std::string& name) {
  if (name == "greedy") return DecodeStrategy::Greedy;
  if (name == "temperature") return DecodeStrategy::Temperature;
  if (name == "topk") return DecodeStrategy::TopK;
  throw ConfigError("decode strategy '" + name + "': expected greedy, temperature or topk");
}

void DecodeOptions::validate() const {
  if (strategy != DecodeStrategy::Greedy && !(temperature > 0.0)) {
    throw ParameterError("temperature must be positive, got " + std::to_string(temperature));
  }
  if (strategy == DecodeStrategy::TopK && top_k < 1) {
    throw ParameterError("top-k needs k >= 1");
  }
}

TokenId sample_token(std::span<const double> logits, const DecodeOptions& options,
                     std::mt19937_64& rng) {
  options.validate();
  if (logits.empty()) throw ShapeError("sample_token: empty logit row");
  const auto argmax = static_cast<TokenId>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  if (options.strategy == DecodeStrategy::Greedy) return argmax;

  std::vector<std::size_t> candidates(logits.size());
  std::iota(candidates.begin(), candidates.end(), 0);
  if (options.strategy == DecodeStrategy::TopK && options.top_k < logits.size()) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    candidates.resize(options.top_k);
    std::sort(candidates.begin(), candidates.end());
  }
  const double mx = logits[static_cast<std::size_t>(argmax)];
  std::vector<double> weights(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    weights[i] = std::exp((logits[candidates[i]] - mx) / options.temperature);
    total += weights[i];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng) * total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (u < weights[i]) return static_cast<TokenId>(candidates[i]);
    u -= weights[i];
  }
  // Rounding left u past the last bucket; take the last nonzero candidate.
  for (std::size_t i = candidates.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<TokenId>(candidates[i]);
  }
  return argmax;
}

std::vector<TokenId> generate(const Model& model, const ImageTensor& image,
                              std::span<const TokenId> prompt, const DecodeOptions& options,
                              std::size_t max_new, std::uint64_t seed) {
  options.validate();
  if (max_new < 1) throw ParameterError("max_new must be at least 1");
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  const std::size_t p = model.config.patch_size;
  const std::size_t visual = ((image.height() + p - 1) / p) * ((image.width() + p - 1) / p);
  std::vector<TokenId> text{kBosId};
  for (std::size_t step = 0; step < max_new; ++step) {
    if (visual + prompt.size() + text.size() > model.config.max_seq_len) break;
    Tensor logits = forward(model, image, text, prompt);
    const auto all = logits.data();
    const std::size_t vocab = logits.cols();
    const TokenId next = sample_token(all.subspan((logits.rows() - 1) * vocab, vocab), options, rng);
    if (next == kEosId) break;
    text.push_back(next);
  }
  return {text.begin() + 1, text.end()};
}

}  // namespace mudaif
