// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

// Python bindings. Structured results cross the boundary as JSON text and
// are decoded on the Python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudaif/checkpoint.hpp"
#include "mudaif/run.hpp"

namespace py = pybind11;
using namespace mudaif;

namespace {

/// A loaded checkpoint: model plus vocabulary.
class PyModel {
 public:
  explicit PyModel(const std::string& path) : ck_(load_checkpoint(path)) {}

  std::string generate(const std::string& image, const std::string& prompt,
                       const std::string& decode, double temperature, std::size_t top_k,
                       std::size_t max_new, std::uint64_t seed) const {
    DecodeOptions options{decode_strategy_from_string(decode), temperature, top_k};
    options.validate();
    const auto pixels = data::load_image(image);
    const auto ids = ck_.vocab.encode(prompt);
    py::gil_scoped_release release;
    return ck_.vocab.decode(mudaif::generate(ck_.model, pixels, ids, options, max_new, seed));
  }

  std::vector<std::vector<double>> logits(const std::string& image, const std::string& text,
                                          const std::string& prompt) const {
    const auto pixels = data::load_image(image);
    const auto ids = decoder_input(ck_.vocab.encode(text));
    const auto prompt_ids = ck_.vocab.encode(prompt);
    NoGradGuard no_grad;
    const Tensor out = forward(ck_.model, pixels, ids, prompt_ids);
    std::vector<std::vector<double>> rows(out.rows(), std::vector<double>(out.cols()));
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) rows[i][j] = out.at(i, j);
    return rows;
  }

  std::vector<double> next_token_distribution(const std::string& image, const std::string& text,
                                              const std::string& prompt) const {
    const auto pixels = data::load_image(image);
    NoGradGuard no_grad;
    return mudaif::next_token_distribution(ck_.model, pixels,
                                           decoder_input(ck_.vocab.encode(text)),
                                           ck_.vocab.encode(prompt));
  }

  std::string evaluate(const std::string& manifest, const std::string& split) const {
    const auto m = data::read_manifest(manifest);
    const auto samples = load_samples(m, split, ck_.vocab);
    if (samples.empty()) throw ConfigError("split '" + split + "' has no records");
    py::gil_scoped_release release;
    return to_json(mudaif::evaluate(ck_.model, ck_.vocab, samples)).dump();
  }

  std::string config() const { return to_json(ck_.model.config).dump(); }
  std::vector<std::string> vocab() const { return ck_.vocab.tokens(); }
  std::size_t parameter_count() const { return ck_.model.parameter_count(); }

 private:
  Checkpoint ck_;
};

std::string py_make_data(const std::string& spec_json, std::size_t n, std::uint64_t seed,
                         const std::string& out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(spec_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
  const auto spec = data::scene_spec_from_json(j);
  py::gil_scoped_release release;
  return data::generate_dataset(spec, n, seed, out).string();
}

std::string py_train(const std::string& config_path, const std::string& out) {
  const auto config = load_run_config(config_path);
  py::gil_scoped_release release;
  return summary_json(run_training(config, out)).dump();
}

std::string py_grad_check(const std::string& config_path) {
  const auto config = load_run_config(config_path);
  GradCheckRun run;
  {
    py::gil_scoped_release release;
    run = run_grad_check(config);
  }
  return nlohmann::json{{"max_rel_error", run.result.max_rel_error},
                        {"worst_parameter", run.result.worst_parameter},
                        {"checked", run.result.checked},
                        {"parameters", run.parameters},
                        {"seconds", run.seconds},
                        {"passed", run.passed}}
      .dump();
}

nlohmann::json cost_json(const CostBreakdown& c) {
  return {{"params", c.params},           {"flops", c.flops},
          {"patch_flops", c.patch_flops}, {"vision_flops", c.vision_flops},
          {"fusion_flops", c.fusion_flops}, {"decoder_flops", c.decoder_flops},
          {"visual_tokens", c.visual_tokens}};
}

std::string py_count_costs(const std::string& model_json, std::size_t height, std::size_t width,
                           std::size_t text_len, std::size_t prompt_len) {
  auto config = model_config_from_json(nlohmann::json::parse(model_json), "$");
  if (config.vocab_size == 0) config.vocab_size = 64;
  const auto c = count_params_flops(config, height, width, text_len, prompt_len);
  return nlohmann::json{{"encoder_free", cost_json(c.encoder_free)},
                        {"encoder_based", cost_json(c.encoder_based)}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Encoder-free vision-language model core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<IndexError>(m, "VocabularyError", base.ptr());
  py::register_exception<LengthError>(m, "LengthError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("generate", &PyModel::generate, py::arg("image"), py::arg("prompt") = "",
           py::arg("decode") = "greedy", py::arg("temperature") = 1.0, py::arg("top_k") = 0,
           py::arg("max_new") = 32, py::arg("seed") = 0)
      .def("logits", &PyModel::logits, py::arg("image"), py::arg("text") = "",
           py::arg("prompt") = "")
      .def("next_token_distribution", &PyModel::next_token_distribution, py::arg("image"),
           py::arg("text") = "", py::arg("prompt") = "")
      .def("evaluate_json", &PyModel::evaluate, py::arg("manifest"), py::arg("split") = "test")
      .def("config_json", &PyModel::config)
      .def_property_readonly("vocab", &PyModel::vocab)
      .def_property_readonly("parameter_count", &PyModel::parameter_count);

  m.def("make_data", &py_make_data, py::arg("spec_json"), py::arg("n"), py::arg("seed"),
        py::arg("out"));
  m.def("train_json", &py_train, py::arg("config"), py::arg("out"));
  m.def("grad_check_json", &py_grad_check, py::arg("config"));
  m.def("count_params_flops_json", &py_count_costs, py::arg("model_json"), py::arg("height"),
        py::arg("width"), py::arg("text_len"), py::arg("prompt_len") = 0);
}
