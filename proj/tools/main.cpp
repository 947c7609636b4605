// Command-line front end. Everything goes through the C API in slsr/slsr.h;
// exit codes are the library's status codes (0 ok, 1 config, 2 missing
// prerequisite, 3 numeric).
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slsr/slsr.h"

namespace {

struct Ctx {
  slsr_ctx* p = slsr_new();
  ~Ctx() { slsr_free(p); }
};

int report_failure(slsr_ctx* ctx, int rc) {
  std::fprintf(stderr, "slsr: %s\n", slsr_last_error(ctx));
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Person re-identification pipeline: cluster features, train "
               "per-cluster generators, and train a classifier whose generated "
               "samples carry sparse smoothed label targets."};
  app.require_subcommand(1);
  app.set_version_flag("--version", slsr_version());

  std::string config_path;
  std::string output_dir;
  uint64_t seed = 0;
  int64_t workers = 1;
  int64_t k = 0;
  int64_t generated_total = 0;
  bool force = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "root random seed (overrides the config)");
  app.add_option("--workers", workers, "execution width; never changes results");
  app.add_option("--k", k, "cluster count (overrides train.k)");
  app.add_option("--generated-total", generated_total,
                 "number of images to generate (overrides the config)");
  app.add_option("--output-dir", output_dir,
                 "artifact directory (overrides the config and SLSR_OUTPUT_DIR)");
  app.add_flag("--force", force, "re-run stages even when their artifacts are current");

  const std::vector<std::pair<const char*, const char*>> kCommands = {
      {"synth", "write the synthetic corpus into the output directory"},
      {"train-features", "train the warm-up model used for feature extraction"},
      {"cluster", "embed the training images and split them into K clusters"},
      {"gan", "train one generator/discriminator pair per cluster"},
      {"generate", "sample images from the trained generators"},
      {"train", "train the classifier on real plus generated images"},
      {"eval", "rank query against gallery and write the metrics report"},
      {"report", "aggregate cluster-quality and retrieval tables (prints them)"},
      {"pipeline", "run every applicable stage in order"},
  };
  for (const auto& [name, desc] : kCommands) app.add_subcommand(name, desc)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : SLSR_ERR_CONFIG;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Ctx ctx;
  if (ctx.p == nullptr) {
    std::fprintf(stderr, "slsr: out of memory\n");
    return SLSR_ERR_NUMERIC;
  }

  if (!config_path.empty()) {
    if (const int rc = slsr_configure_file(ctx.p, config_path.c_str()))
      return report_failure(ctx.p, rc);
  }

  // flag > environment > config file
  std::vector<std::pair<std::string, std::string>> overrides;
  if (app.count("--seed")) overrides.push_back({"seed", std::to_string(seed)});
  if (app.count("--workers")) overrides.push_back({"workers", std::to_string(workers)});
  if (app.count("--k")) overrides.push_back({"train.k", std::to_string(k)});
  if (app.count("--generated-total"))
    overrides.push_back({"train.generated_total", std::to_string(generated_total)});
  if (app.count("--output-dir")) {
    overrides.push_back({"paths.output_dir", output_dir});
  } else if (const char* env = std::getenv("SLSR_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    overrides.push_back({"paths.output_dir", env});
  }
  for (const auto& [key, value] : overrides)
    if (const int rc = slsr_set(ctx.p, key.c_str(), value.c_str()))
      return report_failure(ctx.p, rc);

  if (command == "pipeline") {
    if (const int rc = slsr_run_pipeline(ctx.p, force)) return report_failure(ctx.p, rc);
    std::printf("pipeline complete\n");
    return 0;
  }

  int skipped = 0;
  if (const int rc = slsr_run_stage(ctx.p, command.c_str(), force, &skipped))
    return report_failure(ctx.p, rc);

  if (command == "report") {
    const char* text = slsr_render_report(ctx.p);
    if (text == nullptr) return report_failure(ctx.p, SLSR_ERR_CONFIG);
    std::fputs(text, stdout);
    return 0;
  }

  if (skipped)
    std::printf("%s: up to date (unchanged configuration); use --force to re-run\n",
                command.c_str());
  else
    std::printf("%s: done\n", command.c_str());
  return 0;
}
