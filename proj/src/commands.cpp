#include "gsm/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "gsm/backbone.hpp"
#include "gsm/field_render.hpp"
#include "gsm/graphscan.hpp"
#include "gsm/verify.hpp"

namespace gsm {

namespace {

Index pick(Index value, Index fallback) { return value > 0 ? value : fallback; }

std::string ensure_out_dir(const RunConfig& cfg) {
  const std::string dir = resolve_out_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

double median(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

double elapsed_ms(const std::chrono::steady_clock::time_point& from) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - from)
      .count();
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<BenchRow> bench_routing(const std::vector<std::pair<Index, Index>>& sizes,
                                    Index channels, Index radius, int reps,
                                    std::uint64_t seed) {
  if (reps < 1) throw ParameterError("reps must be positive");
  std::vector<BenchRow> rows;
  for (const auto& [height, width] : sizes) {
    SeededRng rng(seed);
    TokenGrid grid = TokenGrid::seeded(height, width, channels, rng);
    ProjectionSet proj =
        ProjectionSet::seeded(channels, channels, channels, radius, 1, rng, 0.5);

    RoutingField field = compute_affinities(grid, proj, radius);  // warmup
    route_tokens(grid, field, proj);

    std::vector<double> affinity_samples, route_samples;
    for (int rep = 0; rep < reps; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      RoutingField f = compute_affinities(grid, proj, radius);
      affinity_samples.push_back(elapsed_ms(t0));
      auto t1 = std::chrono::steady_clock::now();
      route_tokens(grid, f, proj);
      route_samples.push_back(elapsed_ms(t1));
    }
    BenchRow row{height, width, grid.tokens(), median(affinity_samples),
                 median(route_samples), 0.0};
    row.per_token_us =
        1000.0 * (row.affinity_ms + row.route_ms) / static_cast<double>(row.tokens);
    rows.push_back(row);
  }
  return rows;
}

int cmd_verify(const RunConfig& cfg) {
  VerifyOptions opt;
  opt.seed = cfg.seed;
  opt.height = pick(cfg.height, 8);
  opt.width = pick(cfg.width, 8);
  opt.channels = pick(cfg.channels, 4);
  opt.radius = cfg.radius;
  opt.heads = cfg.heads;
  opt.rel_bias = cfg.rel_bias;
  opt.tolerance = cfg.tolerance;

  VerificationReport report = run_verification(opt);

  std::ostringstream text;
  for (const CheckResult& c : report.checks) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s %-24s max_error=%.3e tolerance=%.3e\n",
                  c.passed ? "PASS" : "FAIL", c.name.c_str(), c.max_error, c.tolerance);
    text << line;
  }
  text << (report.all_passed() ? "all checks passed\n" : "some checks failed\n");

  nlohmann::json doc;
  doc["options"] = {{"seed", opt.seed},     {"height", opt.height},
                    {"width", opt.width},   {"channels", opt.channels},
                    {"radius", opt.radius}, {"heads", opt.heads},
                    {"rel_bias", opt.rel_bias}, {"tolerance", opt.tolerance}};
  doc["checks"] = nlohmann::json::array();
  for (const CheckResult& c : report.checks)
    doc["checks"].push_back({{"name", c.name},
                             {"passed", c.passed},
                             {"max_error", c.max_error},
                             {"tolerance", c.tolerance},
                             {"detail", c.detail}});
  doc["all_passed"] = report.all_passed();

  const std::string dir = ensure_out_dir(cfg);
  write_text_atomic(dir + "/report.txt", text.str());
  write_text_atomic(dir + "/report.json", doc.dump(2) + "\n");

  std::cout << text.str();
  if (const CheckResult* failure = report.first_failure()) {
    std::cerr << "verification failed: " << failure->name << "\n";
    return 1;
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const Index channels = pick(cfg.channels, 64);
  const std::vector<std::pair<Index, Index>> sizes{{16, 16}, {32, 32}, {64, 64}, {128, 128}};
  std::vector<BenchRow> rows = bench_routing(sizes, channels, cfg.radius, 5, cfg.seed);

  std::ostringstream csv;
  csv << "height,width,tokens,affinity_ms,route_ms,per_token_us\n";
  for (const BenchRow& r : rows)
    csv << r.height << "," << r.width << "," << r.tokens << ","
        << format_number(r.affinity_ms) << "," << format_number(r.route_ms) << ","
        << format_number(r.per_token_us) << "\n";

  const std::string dir = ensure_out_dir(cfg);
  write_text_atomic(dir + "/bench.csv", csv.str());

  std::cout << csv.str();
  return 0;
}

int cmd_field(const RunConfig& cfg, const std::string& pattern) {
  const Index height = pick(cfg.height, 8);
  const Index width = pick(cfg.width, 8);
  const Index channels = pick(cfg.channels, 4);
  TokenGrid grid = pattern_grid(pattern, height, width, channels);

  SeededRng rng(cfg.seed);
  ProjectionSet proj =
      ProjectionSet::seeded(grid.channels(), grid.channels(), grid.channels(), cfg.radius, 1,
                            rng, 0.0, cfg.rel_bias ? 0.02 : 0.0);
  RoutingField field = compute_affinities(grid, proj, cfg.radius);
  Matrix displacement = displacement_field(field, grid);
  Matrix positions = expected_positions(field, grid);

  const std::string dir = ensure_out_dir(cfg);
  write_text_atomic(dir + "/magnitude.pgm", render_magnitude_pgm(displacement, grid.H, grid.W));
  write_text_atomic(dir + "/direction.ppm", render_direction_ppm(displacement, grid.H, grid.W));
  write_text_atomic(dir + "/path.svg", render_path_svg(positions, grid.H, grid.W));
  std::cout << "wrote " << dir << "/magnitude.pgm, " << dir << "/direction.ppm, " << dir
            << "/path.svg\n";
  return 0;
}

int cmd_backbone(const RunConfig& cfg) {
  BackboneConfig preset = BackboneConfig::preset(cfg.variant);
  const Index height = pick(cfg.height, 224);
  const Index width = pick(cfg.width, height);

  Index h = height, w = width;
  for (int k = 0; k < 2; ++k) {
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
  }
  std::cout << "variant " << preset.variant << " at " << height << "x" << width << "\n";
  for (int s = 0; s < 4; ++s) {
    const auto u = static_cast<std::size_t>(s);
    if (s > 0) {
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
    char line[160];
    std::snprintf(line, sizeof(line),
                  "stage %d: %lldx%lld, channels %lld, depth %lld, radius %lld\n", s + 1,
                  static_cast<long long>(h), static_cast<long long>(w),
                  static_cast<long long>(preset.stages[u].channels),
                  static_cast<long long>(preset.stages[u].depth),
                  static_cast<long long>(preset.stages[u].radius));
    std::cout << line;
  }

  CountReport report = count_params_flops(preset, height, width);
  char line[200];
  std::snprintf(line, sizeof(line), "params %.3fM, flops %.3fG at %lldx%lld\n",
                static_cast<double>(report.params) / 1e6, report.flops / 1e9,
                static_cast<long long>(height), static_cast<long long>(width));
  std::cout << line;

  CountReport at224 = count_params_flops(preset, 224, 224);
  BudgetTarget target = target_budget(preset.variant);
  const bool params_ok = static_cast<double>(at224.params) >= 0.85 * target.params &&
                         static_cast<double>(at224.params) <= 1.15 * target.params;
  const bool flops_ok = at224.flops >= 0.85 * target.flops && at224.flops <= 1.15 * target.flops;
  std::snprintf(line, sizeof(line),
                "budget at 224x224: params %.3fM vs target %.1fM (within 15%%: %s), "
                "flops %.3fG vs target %.1fG (within 15%%: %s)\n",
                static_cast<double>(at224.params) / 1e6, target.params / 1e6,
                params_ok ? "yes" : "no", at224.flops / 1e9, target.flops / 1e9,
                flops_ok ? "yes" : "no");
  std::cout << line;
  return params_ok && flops_ok ? 0 : 1;
}

}  // namespace gsm
