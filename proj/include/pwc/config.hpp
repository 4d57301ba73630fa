#pragma once

// Run configuration as flat `key = value` text with one section per module:
// [run], [model], [loss], [schedule], [data], [train].

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pwc/losses.hpp"
#include "pwc/model.hpp"
#include "pwc/schedule.hpp"
#include "pwc/synth.hpp"

namespace pwc {

enum class Precision { f32, f64 };
std::string to_string(Precision p);
Precision precision_from_string(const std::string& name);

enum class LossKind { multiscale, robust };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& name);

struct DataConfig {
  SynthSpec synth;  // size, displacement, texture, occlusion; seed is unused
  std::vector<MotionKind> motions{MotionKind::translate, MotionKind::rotate};
  std::size_t train_samples = 0;  // 0 draws a fresh sample for every slot
  std::size_t val_samples = 8;
  AugmentConfig augment{0, 0, true};
  std::string train_dir;  // non-empty loads training pairs from disk
  std::string val_dir;    // non-empty loads validation pairs from disk

  bool operator==(const DataConfig&) const = default;
};

struct TrainConfig {
  long iterations = 1000;
  std::size_t batch_size = 4;
  long val_every = 250;
  long checkpoint_every = 0;  // 0: only the initial and final checkpoints
  long log_every = 50;        // progress lines on stderr

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  ModelConfig model;
  LossKind loss_kind = LossKind::multiscale;
  LossConfig loss;
  ScheduleSpec schedule = ScheduleSpec::s_long();
  DataConfig data;
  TrainConfig train;

  /// Throws std::invalid_argument on the first inconsistency.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Key-value overrides, keyed "section.key".
using ConfigOverrides = std::map<std::string, std::string>;

/// Unknown sections or keys and malformed values throw std::invalid_argument
/// naming the offending key.
RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
std::string serialize_config(const RunConfig& cfg);

/// Collects PWC_<SECTION>_<KEY>=value variables (e.g. PWC_TRAIN_ITERATIONS)
/// from `env` (a null-terminated environ-style array) as overrides.
/// Variables listed in `ignore` (e.g. PWC_CONFIG) are skipped.
ConfigOverrides env_overrides(char** env, const std::vector<std::string>& ignore = {});

}  // namespace pwc
