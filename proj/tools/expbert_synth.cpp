// Writes a planted-rule fixture: dataset, explanations and a ready config.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "expbert/experiment.hpp"
#include "expbert/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a planted-rule relation extraction fixture"};
  expbert::PlantedOptions options;
  std::string out = "synthetic";
  app.add_option("--out", out, "Output directory");
  app.add_option("--train", options.train, "Training instances");
  app.add_option("--val", options.val, "Validation instances");
  app.add_option("--test", options.test, "Test instances");
  app.add_option("--explanations", options.explanations, "Number of explanations");
  app.add_option("--dim", options.dim, "Hash-interpreter width");
  app.add_option("--seed", options.corpus_seed, "Corpus seed");
  app.add_option("--margin", options.margin, "Rejection margin around the threshold");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = expbert::write_planted_fixture(options, out);
    std::cout << "wrote " << config.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return expbert::exit_code_for_current_exception();
  }
  return 0;
}
