#include "mixvox/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <variant>

namespace mixvox {

namespace {

using Member = std::variant<uint64_t RunConfig::*, int RunConfig::*, long RunConfig::*, uint32_t RunConfig::*,
                            double RunConfig::*, std::string RunConfig::*, std::vector<double> RunConfig::*>;

struct Entry {
  const char* key;
  Member member;
};

const std::vector<Entry>& table() {
  static const std::vector<Entry> t = {
      {"seed", &RunConfig::seed},
      {"threads", &RunConfig::threads},
      {"data_dir", &RunConfig::data_dir},
      {"out_dir", &RunConfig::out_dir},
      {"preset", &RunConfig::preset},
      {"scale", &RunConfig::scale},
      {"iterations", &RunConfig::iterations},
      {"batch_rays", &RunConfig::batch_rays},
      {"time_queries", &RunConfig::time_queries},
      {"dynamic_fraction_floor", &RunConfig::dynamic_fraction_floor},
      {"log_every", &RunConfig::log_every},
      {"checkpoint_every", &RunConfig::checkpoint_every},
      {"checkpoint_pattern", &RunConfig::checkpoint_pattern},
      {"eval_stride", &RunConfig::eval_stride},
      {"start_resolution", &RunConfig::start_resolution},
      {"final_resolution", &RunConfig::final_resolution},
      {"upsample_steps", &RunConfig::upsample_steps},
      {"static_density_kind", &RunConfig::static_density_kind},
      {"static_color_kind", &RunConfig::static_color_kind},
      {"dynamic_kind", &RunConfig::dynamic_kind},
      {"rank", &RunConfig::rank},
      {"color_channels", &RunConfig::color_channels},
      {"dynamic_density_channels", &RunConfig::dynamic_density_channels},
      {"dynamic_color_channels", &RunConfig::dynamic_color_channels},
      {"static_hidden", &RunConfig::static_hidden},
      {"static_layers", &RunConfig::static_layers},
      {"decompressor_hidden", &RunConfig::decompressor_hidden},
      {"decompressor_layers", &RunConfig::decompressor_layers},
      {"n_bands", &RunConfig::n_bands},
      {"density_shift", &RunConfig::density_shift},
      {"latent_std", &RunConfig::latent_std},
      {"gamma", &RunConfig::gamma},
      {"beta", &RunConfig::beta},
      {"k_m", &RunConfig::k_m},
      {"variation_iterations", &RunConfig::variation_iterations},
      {"variation_retrain_iterations", &RunConfig::variation_retrain_iterations},
      {"variation_rays", &RunConfig::variation_rays},
      {"variation_lr", &RunConfig::variation_lr},
      {"variation_init_logit", &RunConfig::variation_init_logit},
      {"variation_step_scale", &RunConfig::variation_step_scale},
      {"variation_kind", &RunConfig::variation_kind},
      {"lr_voxel", &RunConfig::lr_voxel},
      {"lr_network", &RunConfig::lr_network},
      {"lr_final_ratio", &RunConfig::lr_final_ratio},
      {"adam_beta1", &RunConfig::adam_beta1},
      {"adam_beta2", &RunConfig::adam_beta2},
      {"adam_eps", &RunConfig::adam_eps},
      {"tv_density", &RunConfig::tv_density},
      {"tv_color", &RunConfig::tv_color},
      {"step_scale", &RunConfig::step_scale},
      {"prune_alpha", &RunConfig::prune_alpha},
      {"background", &RunConfig::background},
      {"render_mode", &RunConfig::render_mode},
  };
  return t;
}

const Entry& lookup(const std::string& key) {
  for (const Entry& e : table())
    if (key == e.key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto r = std::from_chars(b, e, out);
  if (r.ec != std::errc() || r.ptr != e) throw ConfigError("config key '" + key + "': invalid value '" + v + "'");
  return out;
}

void parse_into(RunConfig& cfg, const std::string& text, const std::string& base_dir, int depth) {
  if (depth > 16) throw ConfigError("config include nesting too deep");
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "include") {
      const std::filesystem::path p = std::filesystem::path(base_dir) / value;
      std::ifstream f(p);
      if (!f) throw ConfigError("cannot read included config '" + p.string() + "'");
      std::stringstream ss;
      ss << f.rdbuf();
      parse_into(cfg, ss.str(), p.parent_path().string(), depth + 1);
      continue;
    }
    cfg.set(key, value);
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Entry& e = lookup(key);
  std::visit(
      [&](auto m) {
        using T = std::remove_reference_t<decltype(this->*m)>;
        if constexpr (std::is_same_v<T, std::string>) {
          this->*m = value;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::vector<double> out;
          std::string item;
          std::istringstream ss(value);
          while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(parse_number<double>(key, item));
          }
          this->*m = out;
        } else {
          this->*m = parse_number<T>(key, value);
        }
      },
      e.member);
}

std::string RunConfig::get(const std::string& key) const {
  const Entry& e = lookup(key);
  return std::visit(
      [&](auto m) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*m)>;
        const T& v = this->*m;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string s;
          for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
          return s;
        } else if constexpr (std::is_same_v<T, double>) {
          return fmt_double(v);
        } else {
          return std::to_string(v);
        }
      },
      e.member);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const Entry& e : table()) out.emplace_back(e.key);
    return out;
  }();
  return k;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Entry& e : table()) out += std::string(e.key) + " = " + get(e.key) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& base_dir) {
  RunConfig cfg;
  parse_into(cfg, text, base_dir, 0);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), std::filesystem::path(path).parent_path().string());
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(preset == "S" || preset == "M" || preset == "L" || preset == "X", "preset must be one of S, M, L, X");
  need(scale > 0, "scale must be positive");
  need(batch_rays >= 1, "batch_rays must be at least 1");
  need(time_queries >= 1, "time_queries must be at least 1");
  need(dynamic_fraction_floor >= 0 && dynamic_fraction_floor <= 1, "dynamic_fraction_floor must lie in [0,1]");
  need(start_resolution >= 2 && final_resolution >= start_resolution,
       "resolutions need 2 <= start_resolution <= final_resolution");
  for (double s : upsample_steps) need(s >= 0, "upsample_steps must be non-negative");
  for (const auto* k : {&static_density_kind, &static_color_kind, &dynamic_kind, &variation_kind}) {
    try {
      parse_grid_kind(*k);
    } catch (const std::exception&) {
      throw ConfigError("unknown grid kind '" + *k + "'");
    }
  }
  need(rank >= 1, "rank must be at least 1");
  need(color_channels >= 1 && dynamic_density_channels >= 1 && dynamic_color_channels >= 1,
       "feature channel counts must be positive");
  need(static_hidden >= 1 && decompressor_hidden >= 1, "hidden widths must be positive");
  need(gamma >= 0, "gamma must be non-negative");
  need(beta > 0 && beta < 1, "beta must lie in (0,1)");
  need(k_m >= 1 && k_m % 2 == 1, "k_m must be an odd integer >= 1");
  need(variation_rays >= 1, "variation_rays must be at least 1");
  need(variation_step_scale > 0 && step_scale > 0, "step scales must be positive");
  need(lr_voxel >= 0 && lr_network >= 0 && variation_lr >= 0, "learning rates must be non-negative");
  need(lr_final_ratio > 0, "lr_final_ratio must be positive");
  need(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0,
       "invalid Adam hyperparameters");
  need(tv_density >= 0 && tv_color >= 0, "tv weights must be non-negative");
  need(prune_alpha >= 0 && prune_alpha < 1, "prune_alpha must lie in [0,1)");
  need(background.size() == 3, "background needs three components");
  for (double v : background) need(v >= 0 && v <= 1, "background components must lie in [0,1]");
  need(eval_stride >= 1, "eval_stride must be at least 1");
  parse_render_mode(render_mode);
}

uint64_t RunConfig::preset_iterations() const {
  if (preset == "S") return 5000;
  if (preset == "M") return 12500;
  if (preset == "L") return 25000;
  if (preset == "X") return 50000;
  throw ConfigError("preset must be one of S, M, L, X");
}

uint64_t RunConfig::total_iterations() const {
  if (iterations >= 0) return uint64_t(iterations);
  return uint64_t(std::llround(double(preset_iterations()) * scale));
}

double RunConfig::sample_multiplier() const { return preset == "X" ? 8.0 : 1.0; }

std::vector<uint64_t> RunConfig::upsample_iterations() const {
  const uint64_t total = total_iterations();
  std::vector<uint64_t> out;
  for (double s : upsample_steps) {
    const auto it = uint64_t(std::llround(s * scale));
    if (it > 0 && it < total) out.push_back(it);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

uint32_t RunConfig::resolution_after(size_t k) const {
  const size_t n = upsample_steps.size();
  if (n == 0 || k == 0) return start_resolution;
  const double f = double(std::min(k, n)) / double(n);
  const double r = std::exp(std::log(double(start_resolution)) +
                            (std::log(double(final_resolution)) - std::log(double(start_resolution))) * f);
  return uint32_t(std::lround(r));
}

uint32_t RunConfig::resolution_at(uint64_t iteration) const {
  size_t k = 0;
  for (uint64_t s : upsample_iterations())
    if (s <= iteration) ++k;
  return resolution_after(k);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.static_field.density_kind = parse_grid_kind(static_density_kind);
  m.static_field.color_kind = parse_grid_kind(static_color_kind);
  m.static_field.color_channels = color_channels;
  m.static_field.rank = rank;
  m.static_field.net_hidden = static_hidden;
  m.static_field.net_layers = static_layers;
  m.static_field.n_bands = n_bands;
  m.static_field.density_shift = density_shift;
  m.dynamic_field.kind = parse_grid_kind(dynamic_kind);
  m.dynamic_field.density_channels = dynamic_density_channels;
  m.dynamic_field.color_channels = dynamic_color_channels;
  m.dynamic_field.rank = rank;
  m.dynamic_field.hidden = decompressor_hidden;
  m.dynamic_field.decompressor_layers = decompressor_layers;
  m.dynamic_field.n_bands = n_bands;
  m.dynamic_field.density_shift = density_shift;
  m.dynamic_field.latent_std = latent_std;
  return m;
}

RenderSettings RunConfig::render_settings() const {
  RenderSettings rs;
  rs.step_scale = step_scale;
  rs.sample_multiplier = sample_multiplier();
  rs.prune_alpha = prune_alpha;
  for (int k = 0; k < 3; ++k) rs.background[k] = background.size() == 3 ? background[k] : 0.0;
  rs.mode = parse_render_mode(render_mode);
  return rs;
}

VariationTrainConfig RunConfig::variation_config(bool retrain) const {
  VariationTrainConfig v;
  v.iterations = retrain ? variation_retrain_iterations : variation_iterations;
  v.rays = variation_rays;
  v.lr = variation_lr;
  v.step_scale = variation_step_scale;
  v.init_logit = variation_init_logit;
  v.gamma = gamma;
  v.dynamic_fraction_floor = dynamic_fraction_floor;
  v.kind = parse_grid_kind(variation_kind);
  v.rank = rank;
  v.seed = mix_seed(seed, 0x76617269ULL);
  v.threads = std::max(1, threads);
  return v;
}

std::string format_checkpoint_name(const std::string& pattern, uint64_t step) {
  std::string out = pattern;
  const std::string tag = "{step}";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(step));
  for (size_t p; (p = out.find(tag)) != std::string::npos;) out.replace(p, tag.size(), buf);
  return out;
}

}  // namespace mixvox
