#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "strandopt/config.hpp"
#include "strandopt/pipeline.hpp"
#include "strandopt/types.hpp"

using namespace strandopt;

int main(int argc, char** argv) {
  CLI::App app{"strand reconstruction: orientation field, flow-field init, differentiable fit"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  std::string config_path, out_override, artifact;
  int64_t seed_override = -1;
  int views_override = 0;
  bool show_keys = false;

  app.add_option("--config", config_path, "key=value config file ('#' comments)");
  app.add_option("--seed", seed_override, "override the RNG seed")->check(CLI::NonNegativeNumber);
  app.add_option("--views", views_override, "override the camera count");
  app.add_option("--out", out_override, "override the output directory");
  app.add_option("--stage", artifact, "artifact name for render (gt, init, guides, children)");
  app.add_flag("--config-keys", show_keys, "print every config key with its default and exit");

  CLI::App* c_synth = app.add_subcommand("synth", "generate the synthetic scene and targets");
  CLI::App* c_orient = app.add_subcommand("orient", "estimate the 3D orientation point cloud");
  CLI::App* c_init = app.add_subcommand("init", "solve the flow field and trace initial guides");
  CLI::App* c_fitg = app.add_subcommand("fit-guides", "optimize guides against the targets");
  CLI::App* c_fitc =
      app.add_subcommand("fit-children", "interpolate children from guides and optimize them");
  CLI::App* c_render = app.add_subcommand("render", "render an artifact's views to PNG");
  CLI::App* c_eval = app.add_subcommand("eval", "score artifacts against the ground truth");
  CLI::App* c_toy = app.add_subcommand("toy-aa", "2D line-growing benchmark");
  CLI::App* c_all = app.add_subcommand("all", "run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (show_keys) {
    std::printf("%s", config_documentation().c_str());
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fprintf(stderr, "error: a subcommand is required (see --help)\n");
    return 2;
  }

  try {
    PipelineConfig cfg = load_config(config_path);
    apply_env_overrides(cfg);
    if (seed_override >= 0) cfg.seed = (uint64_t)seed_override;
    if (views_override > 0) cfg.views = views_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    validate_config(cfg);

    OutputLock lock(cfg.out_dir);
    if (c_synth->parsed()) stage_synth(cfg);
    else if (c_orient->parsed()) stage_orient(cfg);
    else if (c_init->parsed()) stage_init(cfg);
    else if (c_fitg->parsed()) stage_fit_guides(cfg);
    else if (c_fitc->parsed()) stage_fit_children(cfg);
    else if (c_render->parsed()) stage_render(cfg, artifact);
    else if (c_eval->parsed()) stage_eval(cfg);
    else if (c_toy->parsed()) stage_toy_aa(cfg);
    else if (c_all->parsed()) stage_all(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "contract violation: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
