#include "pwc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace pwc {
namespace pt = boost::property_tree;
namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw std::invalid_argument("config key '" + key + "' = '" + value + "': " + why);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad(key, v, "trailing characters");
    return d;
  } catch (const std::logic_error&) {
    bad(key, v, "expected a number");
  }
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected an integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long n = to_long(key, v);
  if (n < 0) bad(key, v, "must be >= 0");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  bad(key, v, "expected true or false");
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split(v, ',')) out.push_back(static_cast<int>(to_long(key, item)));
  return out;
}

std::string fmt(double d) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

template <typename C>
std::string join(const C& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
  return out;
}

std::string ints(const std::vector<int>& v) {
  std::vector<std::string> s;
  for (int i : v) s.push_back(std::to_string(i));
  return join(s);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PWC_FIELD(KEY, SET, GET)                                                               \
  Field {                                                                                      \
    KEY, [](RunConfig & c, const std::string& k, const std::string& v) { (void)k; SET; },      \
        [](const RunConfig& c) -> std::string { return GET; }                                  \
  }

// Table order is application order: schedule.kind installs a preset before
// the explicit schedule fields refine it.
const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      PWC_FIELD("run.seed", c.seed = to_u64(k, v), std::to_string(c.seed)),
      PWC_FIELD("run.precision", c.precision = precision_from_string(v), to_string(c.precision)),

      PWC_FIELD("model.num_levels", c.model.num_levels = int(to_long(k, v)), std::to_string(c.model.num_levels)),
      PWC_FIELD("model.output_level", c.model.output_level = int(to_long(k, v)), std::to_string(c.model.output_level)),
      PWC_FIELD("model.search_range", c.model.search_range = int(to_long(k, v)), std::to_string(c.model.search_range)),
      PWC_FIELD("model.pyramid_channels", c.model.pyramid_channels = to_ints(k, v), ints(c.model.pyramid_channels)),
      PWC_FIELD("model.pyramid_convs_per_level", c.model.pyramid_convs_per_level = int(to_long(k, v)),
                std::to_string(c.model.pyramid_convs_per_level)),
      PWC_FIELD("model.estimator_channels", c.model.estimator_channels = to_ints(k, v), ints(c.model.estimator_channels)),
      PWC_FIELD("model.context_channels", c.model.context_channels = to_ints(k, v), ints(c.model.context_channels)),
      PWC_FIELD("model.context_dilations", c.model.context_dilations = to_ints(k, v), ints(c.model.context_dilations)),
      PWC_FIELD("model.use_dense", c.model.use_dense = to_bool(k, v), c.model.use_dense ? "true" : "false"),
      PWC_FIELD("model.use_context", c.model.use_context = to_bool(k, v), c.model.use_context ? "true" : "false"),
      PWC_FIELD("model.use_residual", c.model.use_residual = to_bool(k, v), c.model.use_residual ? "true" : "false"),
      PWC_FIELD("model.use_warping", c.model.use_warping = to_bool(k, v), c.model.use_warping ? "true" : "false"),
      PWC_FIELD("model.learned_features", c.model.learned_features = to_bool(k, v),
                c.model.learned_features ? "true" : "false"),
      PWC_FIELD("model.leaky_slope", c.model.leaky_slope = to_double(k, v), fmt(c.model.leaky_slope)),

      PWC_FIELD("loss.kind", c.loss_kind = loss_kind_from_string(v), to_string(c.loss_kind)),
      PWC_FIELD(
          "loss.alpha",
          {
            c.loss.alpha.clear();
            for (const auto& item : split(v, ',')) {
              const auto kv = split(item, ':');
              if (kv.size() != 2) bad(k, v, "expected level:weight pairs");
              c.loss.alpha[int(to_long(k, kv[0]))] = to_double(k, kv[1]);
            }
          },
          [&c] {
            std::vector<std::string> s;
            for (auto it = c.loss.alpha.rbegin(); it != c.loss.alpha.rend(); ++it)
              s.push_back(std::to_string(it->first) + ":" + fmt(it->second));
            return join(s);
          }()),
      PWC_FIELD("loss.gamma", c.loss.gamma = to_double(k, v), fmt(c.loss.gamma)),
      PWC_FIELD("loss.q", c.loss.q = to_double(k, v), fmt(c.loss.q)),
      PWC_FIELD("loss.epsilon", c.loss.epsilon = to_double(k, v), fmt(c.loss.epsilon)),

      PWC_FIELD("schedule.kind", c.schedule = ScheduleSpec::of_kind(schedule_kind_from_string(v)),
                to_string(c.schedule.kind)),
      PWC_FIELD("schedule.base_lr", c.schedule.base_lr = to_double(k, v), fmt(c.schedule.base_lr)),
      PWC_FIELD(
          "schedule.milestones",
          {
            c.schedule.milestones.clear();
            for (const auto& item : split(v, ',')) {
              const auto kv = split(item, ':');
              if (kv.size() != 2) bad(k, v, "expected iteration:multiplier pairs");
              c.schedule.milestones.push_back({to_long(k, kv[0]), to_double(k, kv[1])});
            }
          },
          [&c] {
            std::vector<std::string> s;
            for (const auto& m : c.schedule.milestones)
              s.push_back(std::to_string(m.iteration) + ":" + fmt(m.multiplier));
            return join(s);
          }()),
      PWC_FIELD(
          "schedule.disruptions",
          {
            c.schedule.disruptions.clear();
            for (const auto& item : split(v, ',')) {
              const auto kv = split(item, ':');
              if (kv.size() != 2 && kv.size() != 3) {
                bad(k, v, "expected iteration:restart_lr[:milestone_scale] triples");
              }
              c.schedule.disruptions.push_back({to_long(k, kv[0]), to_double(k, kv[1]),
                                                kv.size() == 3 ? to_double(k, kv[2]) : 1.0});
            }
          },
          [&c] {
            std::vector<std::string> s;
            for (const auto& d : c.schedule.disruptions)
              s.push_back(std::to_string(d.iteration) + ":" + fmt(d.restart_lr) + ":" +
                          fmt(d.milestone_scale));
            return join(s);
          }()),

      PWC_FIELD("data.height", c.data.synth.height = to_size(k, v), std::to_string(c.data.synth.height)),
      PWC_FIELD("data.width", c.data.synth.width = to_size(k, v), std::to_string(c.data.synth.width)),
      PWC_FIELD(
          "data.motions",
          {
            c.data.motions.clear();
            for (const auto& m : split(v, ',')) c.data.motions.push_back(motion_kind_from_string(m));
          },
          [&c] {
            std::vector<std::string> s;
            for (auto m : c.data.motions) s.push_back(to_string(m));
            return join(s);
          }()),
      PWC_FIELD("data.max_displacement", c.data.synth.max_displacement = to_double(k, v),
                fmt(c.data.synth.max_displacement)),
      PWC_FIELD("data.texture", c.data.synth.texture = texture_kind_from_string(v), to_string(c.data.synth.texture)),
      PWC_FIELD("data.occlusion", c.data.synth.occlusion = to_bool(k, v), c.data.synth.occlusion ? "true" : "false"),
      PWC_FIELD("data.mask_drop_rate", c.data.synth.mask_drop_rate = to_double(k, v),
                fmt(c.data.synth.mask_drop_rate)),
      PWC_FIELD("data.train_samples", c.data.train_samples = to_size(k, v), std::to_string(c.data.train_samples)),
      PWC_FIELD("data.val_samples", c.data.val_samples = to_size(k, v), std::to_string(c.data.val_samples)),
      PWC_FIELD("data.crop_height", c.data.augment.crop_height = to_size(k, v),
                std::to_string(c.data.augment.crop_height)),
      PWC_FIELD("data.crop_width", c.data.augment.crop_width = to_size(k, v),
                std::to_string(c.data.augment.crop_width)),
      PWC_FIELD("data.hflip", c.data.augment.hflip = to_bool(k, v), c.data.augment.hflip ? "true" : "false"),
      PWC_FIELD("data.train_dir", c.data.train_dir = v, c.data.train_dir),
      PWC_FIELD("data.val_dir", c.data.val_dir = v, c.data.val_dir),

      PWC_FIELD("train.iterations", c.train.iterations = to_long(k, v), std::to_string(c.train.iterations)),
      PWC_FIELD("train.batch_size", c.train.batch_size = to_size(k, v), std::to_string(c.train.batch_size)),
      PWC_FIELD("train.val_every", c.train.val_every = to_long(k, v), std::to_string(c.train.val_every)),
      PWC_FIELD("train.checkpoint_every", c.train.checkpoint_every = to_long(k, v),
                std::to_string(c.train.checkpoint_every)),
      PWC_FIELD("train.log_every", c.train.log_every = to_long(k, v), std::to_string(c.train.log_every)),
  };
  return table;
}

#undef PWC_FIELD

}  // namespace

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

std::string to_string(LossKind k) { return k == LossKind::multiscale ? "multiscale" : "robust"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "multiscale") return LossKind::multiscale;
  if (name == "robust") return LossKind::robust;
  throw std::invalid_argument("unknown loss kind '" + name + "' (expected multiscale or robust)");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  schedule.validate();
  data.synth.validate();
  for (int l = model.output_level; l <= model.num_levels; ++l) {
    if (!loss.alpha.count(l)) {
      throw std::invalid_argument("config: loss.alpha has no weight for model level " + std::to_string(l));
    }
  }
  if (data.motions.empty()) throw std::invalid_argument("config: data.motions must not be empty");
  if (data.val_samples == 0 && data.val_dir.empty()) {
    throw std::invalid_argument("config: data.val_samples must be positive");
  }
  if (train.iterations < 0) throw std::invalid_argument("config: train.iterations must be >= 0");
  if (train.batch_size == 0) throw std::invalid_argument("config: train.batch_size must be positive");
  if (train.val_every < 0 || train.checkpoint_every < 0 || train.log_every < 0) {
    throw std::invalid_argument("config: train intervals must be >= 0");
  }
}

RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' must sit inside a section");
    }
    for (const auto& [key, node] : body) values[section + "." + key] = trim(node.data());
  }
  for (const auto& [key, value] : overrides) values[key] = trim(value);

  std::set<std::string> known;
  for (const auto& f : fields()) known.insert(f.key);
  for (const auto& [key, value] : values) {
    if (!known.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  RunConfig cfg;
  for (const auto& f : fields()) {
    auto it = values.find(f.key);
    if (it != values.end()) f.set(cfg, f.key, it->second);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

ConfigOverrides env_overrides(char** env, const std::vector<std::string>& ignore) {
  ConfigOverrides out;
  if (!env) return out;
  std::set<std::string> sections;
  for (const auto& f : fields()) sections.insert(f.key.substr(0, f.key.find('.')));
  for (char** e = env; *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind("PWC_", 0) != 0) continue;
    const std::string name = entry.substr(0, eq);
    if (std::find(ignore.begin(), ignore.end(), name) != ignore.end()) continue;
    std::string rest = name.substr(4);
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto us = rest.find('_');
    if (us == std::string::npos || !sections.count(rest.substr(0, us))) {
      throw std::invalid_argument("environment variable " + name +
                                  " does not name a config key (expected PWC_<SECTION>_<KEY>)");
    }
    out[rest.substr(0, us) + "." + rest.substr(us + 1)] = entry.substr(eq + 1);
  }
  return out;
}

}  // namespace pwc
