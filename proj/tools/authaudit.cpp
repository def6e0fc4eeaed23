#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include "httplib.h"

#include "authaudit/oracle_service.hpp"
#include "authaudit/pipeline.hpp"
#include "authaudit/synth_data.hpp"
#include "authaudit/synthetic_backbone.hpp"
#include "cli_options.hpp"

using namespace authaudit;

namespace {

bool flag_given(int argc, char** argv, const char* name) {
  const std::size_t n = std::strlen(name);
  for (int i = 1; i < argc; ++i)
    if (std::strncmp(argv[i], name, n) == 0 && (argv[i][n] == '\0' || argv[i][n] == '=')) return true;
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit of authenticity-rating predictors and their explanations"};
  app.require_subcommand(1);

  pipeline::RunConfig config;
  std::string stage = "all";
  auto* run = app.add_subcommand("run", "run a pipeline stage (or all stages in order)");
  run->add_option("stage", stage, "ingest | precompute | train | prune | explain | consistency | ensemble | report | all")
      ->required();
  // Options of `run` are read from the [run] section of the configuration file.
  app.set_config("--config", "", "INI/TOML configuration file ([run] section); flags override its values");
  run->fallthrough();
  cli::add_run_options(*run, config);

  auto* defaults = app.add_subcommand("defaults", "print a configuration file with every default filled in");

  SyntheticDatasetOptions synth;
  std::string synth_dir;
  auto* gen = app.add_subcommand("generate-synthetic", "write a synthetic rated image corpus");
  gen->add_option("--out", synth_dir, "output directory")->required();
  gen->add_option("--images", synth.images);
  gen->add_option("--extra-excluded", synth.extra_excluded, "additional low-rated images in category 'art'");
  gen->add_option("--participants", synth.participants);
  gen->add_option("--readout-seed", synth.readout_seed, "backbone whose embedding carries the signal");
  gen->add_option("--seed", synth.seed);
  gen->add_option("--latent-noise", synth.latent_noise);
  gen->add_option("--rater-noise", synth.rater_noise);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::uint64_t> serve_seeds{101, 202, 303};
  auto* serve = app.add_subcommand("serve", "serve synthetic backbones over the oracle protocol");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--synthetic-seeds", serve_seeds)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*defaults) {
      CLI::App tmp;
      pipeline::RunConfig d;
      cli::add_run_options(tmp, d);
      std::cout << "[run]\n" << tmp.config_to_str(true, true);
      return 0;
    }
    if (*gen) {
      const auto files = generate_synthetic_dataset(synth_dir, synth);
      std::cout << "ratings  " << files.ratings.string() << "\nmetadata " << files.metadata.string()
                << "\nmanifest " << files.manifest.string() << "\ntargets  " << files.planted_targets.string()
                << "\n";
      return 0;
    }
    if (*serve) {
      OracleService service;
      for (const auto s : serve_seeds) {
        auto oracle = std::make_shared<SyntheticBackbone>(s);
        service.add_model(oracle->meta().backbone_name, oracle);
        std::cout << "model " << oracle->meta().backbone_name << "\n";
      }
      httplib::Server server;
      service.mount(server);
      std::cout << "listening on " << host << ":" << port << std::endl;
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 3;
      }
      return 0;
    }

    if (const char* env = std::getenv("AUTHAUDIT_ORACLE_URL"); env && *env && !flag_given(argc, argv, "--oracle-url"))
      config.oracle_url = env;
    if (stage == "all") {
      pipeline::run_all(config, std::cout);
    } else {
      pipeline::run_stage(pipeline::parse_stage(stage), config, std::cout);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pipeline::exit_code_for(e);
  }
}
