#pragma once

// Training loop on synthetic or on-disk samples with periodic validation,
// CSV logging and checkpoints.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pwc/checkpoint.hpp"
#include "pwc/config.hpp"
#include "pwc/io.hpp"
#include "pwc/metrics.hpp"
#include "pwc/model.hpp"

namespace pwc {

inline constexpr const char* kTrainLogHeader = "iteration,lr,train_loss,val_aepe";

struct LogRow {
  long iteration = 0;
  double lr = 0.0;
  std::optional<double> train_loss;  // loss of the step taken at this iteration
  std::optional<double> val_aepe;    // after `iteration` steps
};

struct TrainData {
  std::vector<Sample> pool;      // empty: fresh samples every iteration
  std::vector<NamedSample> val;
};

/// Loads or generates the training pool and the validation set. Generated
/// validation samples are written to out_dir/val and read back, so later
/// evaluation of those files sees the same 8-bit images.
TrainData prepare_data(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// The augmented batch used at `iteration`; a pure function of its inputs.
Sample training_batch(const RunConfig& cfg, long iteration, const std::vector<Sample>& pool);

/// Total loss (data terms plus weight decay) of a batch.
template <typename T>
Var<T> training_loss(const RunConfig& cfg, const ParameterStore<T>& params, const Sample& batch);

/// Full-resolution flow in pixels for 1 x 3 x H x W images.
template <typename T>
Tensor<T> predict_flow(const ModelConfig& model, const ParameterStore<T>& params,
                       const Tensor<float>& image1, const Tensor<float>& image2);

/// One report per sample, at batch size 1.
template <typename T>
std::vector<MetricReport> evaluate_samples(const ModelConfig& model, const ParameterStore<T>& params,
                                           const std::vector<NamedSample>& samples);

struct TrainResult {
  std::vector<LogRow> log;
  double initial_val_aepe = 0.0;
  double final_val_aepe = 0.0;
  std::filesystem::path final_checkpoint;
};

/// Writes out_dir/config.ini, out_dir/log.csv, out_dir/val/ and checkpoints
/// out_dir/ckpt_NNNNNNN.pwcp (iteration 0, every checkpoint_every, and the
/// last iteration). Throws std::runtime_error on a non-finite loss, naming
/// the iteration.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                  std::ostream* progress = nullptr);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, long iteration);

}  // namespace pwc
