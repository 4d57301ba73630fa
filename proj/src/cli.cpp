#include "pwc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <optional>

#include "pwc/checkpoint.hpp"
#include "pwc/config.hpp"
#include "pwc/grad_suite.hpp"
#include "pwc/io.hpp"
#include "pwc/metrics.hpp"
#include "pwc/train.hpp"
#include "pwc/viz.hpp"

namespace pwc {
namespace fs = std::filesystem;
namespace {

struct Global {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string precision;
  std::string out_dir;
  std::vector<std::string> sets;
};

// Variables with a meaning of their own rather than a config key.
const std::vector<std::string> kEnvFlags{"PWC_CONFIG", "PWC_OUT_DIR", "PWC_SEED", "PWC_PRECISION"};

std::optional<std::string> env_value(char** env, const std::string& name) {
  if (!env) return std::nullopt;
  for (char** e = env; *e; ++e) {
    const std::string entry = *e;
    if (entry.size() > name.size() && entry.compare(0, name.size(), name) == 0 && entry[name.size()] == '=')
      return entry.substr(name.size() + 1);
  }
  return std::nullopt;
}

// defaults < config file < PWC_* environment < --set < --seed / --precision
RunConfig resolve_config(const Global& g, char** env) {
  ConfigOverrides o = env_overrides(env, kEnvFlags);
  if (auto v = env_value(env, "PWC_SEED")) o["run.seed"] = *v;
  if (auto v = env_value(env, "PWC_PRECISION")) o["run.precision"] = *v;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || s.find('.') > eq) {
      throw std::invalid_argument("--set expects section.key=value, got '" + s + "'");
    }
    o[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (g.seed) o["run.seed"] = std::to_string(*g.seed);
  if (!g.precision.empty()) o["run.precision"] = g.precision;
  std::string path = g.config_path;
  if (path.empty()) path = env_value(env, "PWC_CONFIG").value_or("");
  return path.empty() ? parse_config("", o) : load_config(path, o);
}

fs::path out_dir_of(const Global& g, char** env, const std::string& fallback) {
  if (!g.out_dir.empty()) return g.out_dir;
  return env_value(env, "PWC_OUT_DIR").value_or(fallback);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw std::invalid_argument("--seeds must list at least one seed");
  return seeds;
}

template <typename T>
void infer_with(const Checkpoint<T>& ck, const std::string& img1, const std::string& img2, const std::string& out_flo,
                const std::string& out_png, const std::string& input_dir, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto& model = ck.config.model;
  auto emit = [&](const Tensor<T>& flow, const fs::path& flo, const fs::path& png) {
    write_flo(flo, flow.template cast<float>());
    if (!png.empty()) {
      const auto img = flow_to_color(flow);
      if (img.non_finite) err << "warning: " << img.non_finite << " non-finite flow vectors rendered black\n";
      write_color_png(png, img);
    }
  };
  if (!input_dir.empty()) {
    fs::create_directories(out_dir);
    const auto samples = load_dataset_dir(input_dir, false);
    if (samples.empty()) throw std::invalid_argument("no samples in " + input_dir);
    std::vector<std::string> names;
    std::vector<MetricReport> reports;
    for (const auto& ns : samples) {
      const auto flow = predict_flow(model, ck.params, ns.sample.image1, ns.sample.image2);
      emit(flow, out_dir / (ns.name + "_flow.flo"), out_dir / (ns.name + "_flow.png"));
      names.push_back(ns.name);
      reports.push_back(evaluate(flow, ns.sample.flow.template cast<T>(), ns.sample.mask.template cast<T>()));
    }
    write_metrics_csv(out, names, reports);
    return;
  }
  if (img1.empty() || img2.empty() || out_flo.empty()) {
    throw std::invalid_argument("infer needs --img1, --img2 and --out-flo, or --input-dir");
  }
  const auto a = read_png(img1, 3), b = read_png(img2, 3);
  if (a.shape() != b.shape()) {
    throw DimensionError("infer: image sizes differ: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  emit(predict_flow(model, ck.params, a, b), out_flo, out_png);
  out << "wrote " << out_flo << (out_png.empty() ? "" : " and " + out_png) << "\n";
}

fs::path pred_file(const fs::path& pred_dir, const std::string& name) {
  for (const auto& candidate : {name + "_flow.flo", name + ".flo"})
    if (fs::exists(pred_dir / candidate)) return pred_dir / candidate;
  throw std::invalid_argument("no prediction for sample " + name + " in " + pred_dir.string());
}

void eval_dirs(const fs::path& pred_dir, const fs::path& gt_dir, std::ostream& out) {
  if (!fs::is_directory(gt_dir)) throw std::invalid_argument("not a directory: " + gt_dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    const std::string f = e.path().filename().string();
    const std::string suffix = "_flow.flo";
    if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0)
      names.push_back(f.substr(0, f.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw std::invalid_argument("no *_flow.flo ground truth in " + gt_dir.string());
  std::vector<MetricReport> reports;
  for (const auto& name : names) {
    const auto gt = read_flo(gt_dir / (name + "_flow.flo"));
    const auto pred = read_flo(pred_file(pred_dir, name));
    if (pred.shape() != gt.shape()) {
      throw DimensionError("sample " + name + ": prediction " + shape_to_string(pred.shape()) +
                           " vs ground truth " + shape_to_string(gt.shape()));
    }
    Tensor<float> mask({1, 1, gt.height(), gt.width()}, 1.0f);
    const auto mask_path = gt_dir / (name + "_mask.png");
    if (fs::exists(mask_path)) {
      mask = read_png(mask_path, 1);
      if (mask.height() != gt.height() || mask.width() != gt.width())
        throw DimensionError("sample " + name + ": mask size differs from the flow");
      for (auto& m : mask.data()) m = m >= 0.5f ? 1.0f : 0.0f;
    }
    reports.push_back(evaluate(pred.cast<double>(), gt.cast<double>(), mask.cast<double>()));
  }
  write_metrics_csv(out, names, reports);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err, char** env) {
  CLI::App app{"pwc: coarse-to-fine optical flow networks trained from scratch"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config_path, "INI run config ([run] [model] [loss] [schedule] [data] [train])");
  app.add_option("--seed", g.seed, "Run seed (overrides run.seed)");
  app.add_option("--precision", g.precision, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--set", g.sets, "Config override section.key=value (repeatable)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operator");
  std::string seeds_text = "0,1,2";
  gradcheck->add_option("--seeds", seeds_text, "Comma-separated seeds");

  auto* train_cmd = app.add_subcommand("train", "Train on synthetic or on-disk samples");

  auto* infer = app.add_subcommand("infer", "Predict flow with a checkpoint");
  std::string ckpt, img1, img2, out_flo, out_png, input_dir;
  infer->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  infer->add_option("--img1", img1, "First frame (PNG)");
  infer->add_option("--img2", img2, "Second frame (PNG)");
  infer->add_option("--out-flo", out_flo, "Output .flo");
  infer->add_option("--out-png", out_png, "Output colour-coded PNG");
  infer->add_option("--input-dir", input_dir, "Sample directory; writes NNNN_flow.flo/.png to --out-dir");

  auto* eval = app.add_subcommand("eval", "Score predicted .flo files against ground truth");
  std::string pred_dir, gt_dir, csv_path;
  eval->add_option("--pred-dir", pred_dir, "Directory with NNNN_flow.flo or NNNN.flo predictions")->required();
  eval->add_option("--gt-dir", gt_dir, "Directory with NNNN_flow.flo and optional NNNN_mask.png")->required();
  eval->add_option("--csv", csv_path, "Write the CSV here instead of stdout");

  auto* ablate = app.add_subcommand("ablate", "Emit the config of an ablation variant");
  std::string variant;
  bool list = false;
  ablate->add_option("--variant", variant, "Variant name");
  ablate->add_flag("--list", list, "List variant names");

  auto* synth = app.add_subcommand("synth", "Write a synthetic sample directory");
  std::size_t count = 8;
  synth->add_option("--count", count, "Number of samples");

  auto* viz = app.add_subcommand("viz", "Colour-code a .flo file");
  std::string flo_in, png_out;
  std::optional<double> max_norm;
  viz->add_option("--flo", flo_in, "Input .flo")->required();
  viz->add_option("--out", png_out, "Output PNG")->required();
  viz->add_option("--max-norm", max_norm, "Saturation magnitude (default: 99th percentile)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gradcheck->parsed()) {
      return report_grad_suite(run_grad_suite(default_grad_suite(), parse_seeds(seeds_text)), out);
    }
    if (train_cmd->parsed()) {
      const RunConfig cfg = resolve_config(g, env);
      const fs::path dir = out_dir_of(g, env, "run");
      const auto r = train(cfg, dir, &err);
      out << "initial val AEPE " << r.initial_val_aepe << "\nfinal val AEPE " << r.final_val_aepe
          << "\ncheckpoint " << r.final_checkpoint.string() << "\n";
      return 0;
    }
    if (infer->parsed()) {
      const auto header = read_checkpoint_header(ckpt);
      // An explicit model config must agree with the one embedded in the checkpoint.
      if (!g.config_path.empty() || std::any_of(g.sets.begin(), g.sets.end(),
                                                [](const std::string& s) { return s.rfind("model.", 0) == 0; })) {
        if (resolve_config(g, env).model != header.config.model) {
          throw std::invalid_argument("model config does not match checkpoint " + ckpt);
        }
      }
      Precision p = header.stored;
      if (!g.precision.empty()) p = precision_from_string(g.precision);
      const fs::path dir = out_dir_of(g, env, "pred");
      if (p == Precision::f64) {
        infer_with(load_checkpoint<double>(ckpt), img1, img2, out_flo, out_png, input_dir, dir, out, err);
      } else {
        infer_with(load_checkpoint<float>(ckpt), img1, img2, out_flo, out_png, input_dir, dir, out, err);
      }
      return 0;
    }
    if (eval->parsed()) {
      if (csv_path.empty()) {
        eval_dirs(pred_dir, gt_dir, out);
      } else {
        std::ostringstream buf;
        eval_dirs(pred_dir, gt_dir, buf);
        std::ofstream f(csv_path);
        if (!(f << buf.str())) throw std::runtime_error("cannot write " + csv_path);
      }
      return 0;
    }
    if (ablate->parsed()) {
      if (list) {
        for (const auto& v : ablation_variants()) out << v << "\n";
        return 0;
      }
      if (variant.empty()) throw std::invalid_argument("ablate needs --variant or --list");
      RunConfig cfg = resolve_config(g, env);
      cfg.model = apply_ablation(cfg.model, variant);
      cfg.validate();
      out << serialize_config(cfg);
      return 0;
    }
    if (synth->parsed()) {
      const RunConfig cfg = resolve_config(g, env);
      SynthSpec spec = cfg.data.synth;
      spec.seed = cfg.seed;
      const fs::path dir = out_dir_of(g, env, "synth");
      fs::create_directories(dir);
      write_dataset_dir(dir, gen_dataset(spec, cfg.data.motions, count));
      out << "wrote " << count << " samples to " << dir.string() << "\n";
      return 0;
    }
    if (viz->parsed()) {
      const auto img = flow_to_color(read_flo(flo_in), max_norm);
      if (img.non_finite) err << "warning: " << img.non_finite << " non-finite flow vectors rendered black\n";
      write_color_png(png_out, img);
      out << "wrote " << png_out << " (max_norm " << img.max_norm << ")\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace pwc
