#include "pwc/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pwc/fpenv.hpp"
#include "pwc/losses.hpp"
#include "pwc/optimizer.hpp"
#include "pwc/schedule.hpp"

namespace pwc {
namespace fs = std::filesystem;
namespace {

// Sub-seeds of the run seed.
enum : std::uint64_t { kInitSeed = 10, kPoolSeed = 11, kFreshSeed = 12, kAugmentSeed = 13, kValSeed = 14, kPickSeed = 15 };

SynthSpec synth_for(const RunConfig& cfg, std::uint64_t seed) {
  SynthSpec s = cfg.data.synth;
  s.seed = seed;
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

template <typename T>
TrainResult run(const RunConfig& cfg, const fs::path& out_dir, std::ostream* progress) {
  using clock = std::chrono::steady_clock;
  fs::create_directories(out_dir);
  {
    std::ofstream c(out_dir / "config.ini");
    c << serialize_config(cfg);
    if (!c) throw std::runtime_error("cannot write " + (out_dir / "config.ini").string());
  }
  const TrainData data = prepare_data(cfg, out_dir);
  auto params = init_parameters<T>(cfg.model, derive_seed(cfg.seed, kInitSeed));
  AdamOptimizer<T> opt;

  std::ofstream log(out_dir / "log.csv");
  if (!log) throw std::runtime_error("cannot write " + (out_dir / "log.csv").string());
  log << kTrainLogHeader << "\n";

  TrainResult result;
  auto validate = [&] { return aggregate(evaluate_samples(cfg.model, params, data.val)).aepe; };
  auto emit = [&](const LogRow& row) {
    log << row.iteration << "," << fmt(row.lr) << "," << (row.train_loss ? fmt(*row.train_loss) : "") << ","
        << (row.val_aepe ? fmt(*row.val_aepe) : "") << "\n";
    log.flush();
    result.log.push_back(row);
  };

  const long n = cfg.train.iterations;
  const auto start = clock::now();
  save_checkpoint(checkpoint_path(out_dir, 0), cfg, 0, params);
  for (long it = 0; it < n; ++it) {
    LogRow row;
    row.iteration = it;
    row.lr = lr_at(cfg.schedule, it);
    if (it == 0 || (cfg.train.val_every > 0 && it % cfg.train.val_every == 0)) row.val_aepe = validate();
    if (it == 0) result.initial_val_aepe = *row.val_aepe;

    params.zero_grad();
    auto loss = training_loss(cfg, params, training_batch(cfg, it, data.pool));
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value)) {
      throw std::runtime_error("training diverged: non-finite loss at iteration " + std::to_string(it));
    }
    backward(loss);
    opt.step(params, row.lr);
    row.train_loss = value;
    emit(row);

    const long done = it + 1;
    if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 && done != n) {
      save_checkpoint(checkpoint_path(out_dir, done), cfg, done, params);
    }
    if (progress && cfg.train.log_every > 0 && (it % cfg.train.log_every == 0 || done == n)) {
      const double secs = std::chrono::duration<double>(clock::now() - start).count();
      *progress << "iter " << it << "  lr " << row.lr << "  loss " << value;
      if (row.val_aepe) *progress << "  val_aepe " << *row.val_aepe;
      *progress << "  (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat
                << std::setprecision(6) << "\n";
    }
  }
  LogRow last;
  last.iteration = n;
  last.lr = lr_at(cfg.schedule, n);
  last.val_aepe = validate();
  emit(last);
  if (n == 0) result.initial_val_aepe = *last.val_aepe;
  result.final_val_aepe = *last.val_aepe;
  result.final_checkpoint = checkpoint_path(out_dir, n);
  if (n > 0) save_checkpoint(result.final_checkpoint, cfg, n, params);
  if (progress) *progress << "final val_aepe " << result.final_val_aepe << "\n";
  return result;
}

}  // namespace

fs::path checkpoint_path(const fs::path& out_dir, long iteration) {
  std::ostringstream name;
  name << "ckpt_" << std::setw(7) << std::setfill('0') << iteration << ".pwcp";
  return out_dir / name.str();
}

TrainData prepare_data(const RunConfig& cfg, const fs::path& out_dir) {
  TrainData d;
  if (!cfg.data.train_dir.empty()) {
    for (auto& s : load_dataset_dir(cfg.data.train_dir, true)) d.pool.push_back(std::move(s.sample));
    if (d.pool.empty()) throw std::invalid_argument("no training samples in " + cfg.data.train_dir);
  } else if (cfg.data.train_samples > 0) {
    d.pool = gen_dataset(synth_for(cfg, derive_seed(cfg.seed, kPoolSeed)), cfg.data.motions, cfg.data.train_samples);
  }
  if (!cfg.data.val_dir.empty()) {
    d.val = load_dataset_dir(cfg.data.val_dir, true);
  } else {
    const auto dir = out_dir / "val";
    fs::create_directories(dir);
    write_dataset_dir(dir, gen_dataset(synth_for(cfg, derive_seed(cfg.seed, kValSeed)), cfg.data.motions,
                                       cfg.data.val_samples));
    d.val = load_dataset_dir(dir, true);
  }
  if (d.val.empty()) throw std::invalid_argument("validation set is empty");
  return d;
}

Sample training_batch(const RunConfig& cfg, long iteration, const std::vector<Sample>& pool) {
  std::vector<Sample> items;
  for (std::size_t i = 0; i < cfg.train.batch_size; ++i) {
    const std::uint64_t k = static_cast<std::uint64_t>(iteration) * cfg.train.batch_size + i;
    Sample s;
    if (pool.empty()) {
      SynthSpec spec = synth_for(cfg, derive_seed(derive_seed(cfg.seed, kFreshSeed), k));
      spec.motion = cfg.data.motions[k % cfg.data.motions.size()];
      s = gen_sample(spec);
    } else {
      s = pool[derive_seed(derive_seed(cfg.seed, kPickSeed), k) % pool.size()];
    }
    items.push_back(augment(s, cfg.data.augment, derive_seed(derive_seed(cfg.seed, kAugmentSeed), k)));
  }
  return stack(items);
}

template <typename T>
Var<T> training_loss(const RunConfig& cfg, const ParameterStore<T>& params, const Sample& batch) {
  FlushDenormals ftz;
  const auto pred = forward(make_constant(batch.image1.cast<T>()), make_constant(batch.image2.cast<T>()),
                            cfg.model, params);
  const auto sup = prepare_supervision(batch.flow.cast<T>(), batch.mask.cast<T>(), cfg.model.output_level,
                                       cfg.model.num_levels, cfg.loss.flow_scale);
  return cfg.loss_kind == LossKind::multiscale ? multiscale_loss(pred, sup, params, cfg.loss)
                                               : robust_loss(pred, sup, params, cfg.loss);
}

template <typename T>
Tensor<T> predict_flow(const ModelConfig& model, const ParameterStore<T>& params, const Tensor<float>& image1,
                       const Tensor<float>& image2) {
  FlushDenormals ftz;
  return forward(make_constant(image1.cast<T>()), make_constant(image2.cast<T>()), model, params)
      .final.tensor.value();
}

template <typename T>
std::vector<MetricReport> evaluate_samples(const ModelConfig& model, const ParameterStore<T>& params,
                                           const std::vector<NamedSample>& samples) {
  std::vector<MetricReport> out;
  for (const auto& ns : samples) {
    const auto& s = ns.sample;
    out.push_back(evaluate(predict_flow(model, params, s.image1, s.image2), s.flow.cast<T>(), s.mask.cast<T>()));
  }
  return out;
}

TrainResult train(const RunConfig& cfg, const fs::path& out_dir, std::ostream* progress) {
  cfg.validate();
  FlushDenormals ftz;
  return cfg.precision == Precision::f64 ? run<double>(cfg, out_dir, progress) : run<float>(cfg, out_dir, progress);
}

#define PWC_INSTANTIATE(T)                                                                                  \
  template Var<T> training_loss<T>(const RunConfig&, const ParameterStore<T>&, const Sample&);             \
  template Tensor<T> predict_flow<T>(const ModelConfig&, const ParameterStore<T>&, const Tensor<float>&,   \
                                     const Tensor<float>&);                                                 \
  template std::vector<MetricReport> evaluate_samples<T>(const ModelConfig&, const ParameterStore<T>&,     \
                                                         const std::vector<NamedSample>&);
PWC_INSTANTIATE(float)
PWC_INSTANTIATE(double)
#undef PWC_INSTANTIATE

}  // namespace pwc
