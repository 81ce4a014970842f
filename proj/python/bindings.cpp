#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tap/chain.hpp"
#include "tap/cli.hpp"
#include "tap/environments.hpp"
#include "tap/errors.hpp"
#include "tap/json_io.hpp"
#include "tap/neural.hpp"
#include "tap/theory.hpp"

namespace py = pybind11;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them.
using Steps = std::vector<std::vector<std::string>>;

tap::ReasoningChain to_chain(const Steps& steps) {
  tap::ReasoningChain c;
  c.steps = steps;
  return c;
}

Steps from_chain(const tap::ReasoningChain& c) {
  return c.steps;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = tap::cli::run(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

std::string generate_tasks(std::size_t n, std::uint64_t seed) {
  const auto tasks = tap::generate_synthetic_tasks(n, tap::SyntheticTaskConfig{}, seed);
  tap::Json j = tap::Json::array();
  for (const auto& t : tasks) j.push_back(tap::task_record_to_json(t));
  return j.dump();
}

double synthetic_reward(const std::string& task_json, const Steps& chain,
                        const std::string& similarity) {
  const auto record = tap::task_record_from_json(tap::Json::parse(task_json));
  tap::Similarity sim;
  if (similarity == "token_f1") {
    sim = tap::Similarity::TokenF1;
  } else if (similarity == "normalized_levenshtein") {
    sim = tap::Similarity::NormalizedLevenshtein;
  } else {
    throw tap::ConfigError("similarity: unknown value '" + similarity + "'");
  }
  auto env = tap::SyntheticOracleEnv::from_tasks({record}, sim);
  return env.evaluate(record.input, to_chain(chain));
}

std::string simulation_lemma(std::size_t trials, std::uint64_t seed) {
  tap::SimLemmaConfig c;
  c.n_trials = trials;
  c.seed = seed;
  py::gil_scoped_release release;
  return tap::simlemma_to_json(tap::run_simulation_lemma_suite(c)).dump();
}

std::string convergence(const std::vector<std::size_t>& sizes, std::size_t seeds,
                        std::size_t epochs, std::uint64_t seed) {
  tap::ConvergenceConfig c;
  c.sizes = sizes;
  c.seeds = seeds;
  c.train.epochs = epochs;
  c.seed = seed;
  py::gil_scoped_release release;
  return tap::rate_fit_to_json(tap::run_convergence_suite(c)).dump();
}

std::string multiscale(std::size_t seeds, std::uint64_t seed) {
  tap::MultiscaleConfig c;
  c.seeds = seeds;
  c.seed = seed;
  py::gil_scoped_release release;
  return tap::multiscale_to_json(tap::run_multiscale_suite(c)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the tap package";

  auto base = py::register_exception<tap::Error>(m, "TapError", PyExc_RuntimeError);
  py::register_exception<tap::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<tap::DomainError>(m, "DomainError", base.ptr());
  py::register_exception<tap::InvalidTokenError>(m, "InvalidTokenError", base.ptr());
  py::register_exception<tap::NumericsError>(m, "NumericsError", base.ptr());
  py::register_exception<tap::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<tap::EnvError>(m, "EnvError", base.ptr());

  m.attr("EXIT_OK") = tap::cli::kExitOk;
  m.attr("EXIT_CHECK_FAILED") = tap::cli::kExitCheckFailed;
  m.attr("EXIT_CONFIG") = tap::cli::kExitConfig;
  m.attr("EXIT_ENV") = tap::cli::kExitEnv;
  m.attr("EXIT_NUMERIC") = tap::cli::kExitNumeric;

  m.def("run_cli", &run_cli, py::arg("args"));
  m.def(
      "parse_chain",
      [](const std::string& text, const std::string& delimiter) {
        return from_chain(tap::parse_chain(text, delimiter));
      },
      py::arg("text"), py::arg("delimiter") = "\n");
  m.def(
      "render_chain",
      [](const Steps& steps, const std::string& delimiter) {
        return tap::render_chain(to_chain(steps), delimiter);
      },
      py::arg("steps"), py::arg("delimiter") = "\n");
  m.def("token_f1", &tap::token_f1, py::arg("candidate"), py::arg("reference"));
  m.def("normalized_levenshtein", &tap::normalized_levenshtein, py::arg("a"), py::arg("b"));
  m.def(
      "softmax",
      [](const std::vector<double>& values, double tau) {
        return tap::softmax_with_temperature(values, tau);
      },
      py::arg("values"), py::arg("tau") = 1.0);
  m.def("generate_tasks_json", &generate_tasks, py::arg("n"), py::arg("seed") = 0);
  m.def("synthetic_reward", &synthetic_reward, py::arg("task_json"), py::arg("chain"),
        py::arg("similarity") = "token_f1");
  m.def("simulation_lemma_json", &simulation_lemma, py::arg("trials") = 100,
        py::arg("seed") = 0);
  m.def("convergence_json", &convergence, py::arg("sizes"), py::arg("seeds") = 5,
        py::arg("epochs") = 20, py::arg("seed") = 0);
  m.def("multiscale_json", &multiscale, py::arg("seeds") = 5, py::arg("seed") = 0);
}
