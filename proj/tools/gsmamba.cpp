#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"

#include "gsm/commands.hpp"
#include "gsm/run_config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"local semantic routing + selective scan toolkit"};
  app.require_subcommand(1);

  gsm::RunConfig cfg;
  std::string config_path;

  std::map<std::string, CLI::Option*> tracked;
  tracked["seed"] = app.add_option("--seed", cfg.seed, "RNG seed");
  tracked["height"] = app.add_option("--height", cfg.height, "grid or image height");
  tracked["width"] = app.add_option("--width", cfg.width, "grid or image width");
  tracked["channels"] = app.add_option("--channels", cfg.channels, "token channels");
  tracked["radius"] = app.add_option("--radius", cfg.radius, "routing window radius");
  tracked["heads"] = app.add_option("--heads", cfg.heads, "routing head count");
  tracked["variant"] = app.add_option("--variant", cfg.variant, "backbone preset name");
  tracked["tolerance"] =
      app.add_option("--tolerance", cfg.tolerance, "override every check tolerance");
  tracked["out_dir"] = app.add_option("--out-dir", cfg.out_dir, "output directory");
  app.add_option("--config", config_path, "JSON config file");

  CLI::App* verify = app.add_subcommand("verify", "run the identity checks, write a report");
  CLI::App* bench = app.add_subcommand("bench", "time the routing operator across sizes");
  CLI::App* field = app.add_subcommand("field", "render displacement-field images");
  std::string pattern = "checker";
  field->add_option("pattern", pattern, "checker, gradient, impulse, or a grid JSON path");
  CLI::App* backbone = app.add_subcommand("backbone", "print preset geometry and budgets");
  for (CLI::App* sub : {verify, bench, field, backbone}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    std::set<std::string> fixed;
    for (const auto& [key, option] : tracked)
      if (option->count() > 0) fixed.insert(key);
    if (fixed.count("out_dir") == 0) {
      if (const char* env = std::getenv("GSMAMBA_OUT_DIR"); env != nullptr && *env != '\0') {
        cfg.out_dir = env;
        fixed.insert("out_dir");
      }
    }
    if (!config_path.empty()) gsm::apply_config_file(cfg, config_path, fixed);

    if (verify->parsed()) return gsm::cmd_verify(cfg);
    if (bench->parsed()) return gsm::cmd_bench(cfg);
    if (field->parsed()) return gsm::cmd_field(cfg, pattern);
    if (backbone->parsed()) return gsm::cmd_backbone(cfg);
  } catch (const gsm::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
