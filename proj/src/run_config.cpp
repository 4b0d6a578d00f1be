#include "gsm/run_config.hpp"

#include <fstream>

#include "json.hpp"

namespace gsm {

void apply_config_file(RunConfig& cfg, const std::string& path,
                       const std::set<std::string>& fixed) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse config file '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw InputError("config file '" + path + "' must hold an object");

  auto settled = [&fixed](const std::string& key) { return fixed.count(key) != 0; };
  try {
    for (const auto& [key, value] : doc.items()) {
      if (settled(key)) continue;
      if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "height") cfg.height = value.get<Index>();
      else if (key == "width") cfg.width = value.get<Index>();
      else if (key == "channels") cfg.channels = value.get<Index>();
      else if (key == "radius") cfg.radius = value.get<Index>();
      else if (key == "heads") cfg.heads = value.get<Index>();
      else if (key == "rel_bias") cfg.rel_bias = value.get<bool>();
      else if (key == "variant") cfg.variant = value.get<std::string>();
      else if (key == "tolerance") cfg.tolerance = value.get<double>();
      else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
      else throw InputError("config file '" + path + "' has unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config file '" + path + "' has a badly typed value: " +
                     std::string(e.what()));
  }
  cfg.config_path = path;
}

std::string resolve_out_dir(const RunConfig& cfg) {
  return cfg.out_dir.empty() ? std::string(".") : cfg.out_dir;
}

}  // namespace gsm
