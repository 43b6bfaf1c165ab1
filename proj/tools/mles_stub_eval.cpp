// Deterministic stand-in for the environment evaluator, speaking the same
// line protocol on stdin/stdout.

#include <CLI11.hpp>

#include <iostream>

#include "mles/eval/stub_evaluator.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stub policy evaluator (scores by code length)"};
  mles::StubEvaluatorOptions opt;
  bool no_ensemble = false;
  app.add_flag("--stub", "Accepted for command-line compatibility with the real evaluator");
  app.add_option("--target", opt.target_length, "Code length that scores 1.0");
  app.add_flag("--no-ensemble", no_ensemble, "Do not announce ensemble support");
  CLI11_PARSE(app, argc, argv);
  opt.ensemble = !no_ensemble;
  std::ios::sync_with_stdio(false);
  return mles::run_stub_evaluator(std::cin, std::cout, opt);
}
