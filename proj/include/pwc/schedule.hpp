#pragma once

#include <string>
#include <vector>

namespace pwc {

enum class ScheduleKind { s_long, s_fine, disrupted_ft, rob_mixed, custom };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Multiplies the rate once `iteration` iterations have passed since the
/// start of the current segment.
struct Milestone {
  long iteration = 0;
  double multiplier = 1.0;

  bool operator==(const Milestone&) const = default;
};

/// Restarts the rate at `restart_lr`; milestones then re-apply relative to
/// this point with their offsets multiplied by `milestone_scale`.
struct Disruption {
  long iteration = 0;
  double restart_lr = 0.0;
  double milestone_scale = 1.0;

  bool operator==(const Disruption&) const = default;
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::custom;
  double base_lr = 1e-4;
  std::vector<Milestone> milestones;
  std::vector<Disruption> disruptions;

  void validate() const;
  bool operator==(const ScheduleSpec&) const = default;

  /// 1e-4 halved at 0.4M, 0.6M, 0.8M and 1M iterations.
  static ScheduleSpec s_long();
  /// 1e-5 halved at 0.2M, 0.3M, 0.4M and 0.5M iterations.
  static ScheduleSpec s_fine();
  /// Fine-tuning schedule with two restarts.
  static ScheduleSpec disrupted_ft();
  /// Mixed-dataset fine-tuning: longer, four restarts.
  static ScheduleSpec rob_mixed();
  static ScheduleSpec of_kind(ScheduleKind kind);

  /// Adds restarts at `iterations`, each at half the previous segment's
  /// starting rate, with milestone offsets scaled by the segment length
  /// relative to the first segment. `horizon` ends the last segment.
  ScheduleSpec& add_default_disruptions(const std::vector<long>& iterations, long horizon);
};

double lr_at(const ScheduleSpec& spec, long iteration);

}  // namespace pwc
