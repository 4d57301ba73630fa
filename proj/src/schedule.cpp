#include "pwc/schedule.hpp"

#include <algorithm>
#include <stdexcept>

namespace pwc {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::s_long: return "s_long";
    case ScheduleKind::s_fine: return "s_fine";
    case ScheduleKind::disrupted_ft: return "disrupted_ft";
    case ScheduleKind::rob_mixed: return "rob_mixed";
    case ScheduleKind::custom: return "custom";
  }
  throw std::invalid_argument("unknown schedule kind");
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  for (auto k : {ScheduleKind::s_long, ScheduleKind::s_fine, ScheduleKind::disrupted_ft,
                 ScheduleKind::rob_mixed, ScheduleKind::custom}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown schedule kind '" + name +
                              "' (expected s_long, s_fine, disrupted_ft, rob_mixed or custom)");
}

void ScheduleSpec::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("schedule: base_lr must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    const auto& m = milestones[i];
    if (m.iteration <= 0) throw std::invalid_argument("schedule: milestone iterations must be > 0");
    if (i > 0 && m.iteration <= milestones[i - 1].iteration) {
      throw std::invalid_argument("schedule: milestones must be strictly increasing in iteration");
    }
    if (!(m.multiplier > 0.0) || m.multiplier > 1.0) {
      throw std::invalid_argument("schedule: milestone multipliers must lie in (0, 1]");
    }
  }
  for (std::size_t i = 0; i < disruptions.size(); ++i) {
    const auto& d = disruptions[i];
    if (d.iteration <= 0) throw std::invalid_argument("schedule: disruption iterations must be > 0");
    if (i > 0 && d.iteration <= disruptions[i - 1].iteration) {
      throw std::invalid_argument("schedule: disruptions must be strictly increasing in iteration");
    }
    if (!(d.restart_lr > 0.0)) throw std::invalid_argument("schedule: restart_lr must be positive");
    if (!(d.milestone_scale > 0.0)) {
      throw std::invalid_argument("schedule: milestone_scale must be positive");
    }
  }
}

namespace {

ScheduleSpec halving(ScheduleKind kind, double base, std::vector<long> at) {
  ScheduleSpec s;
  s.kind = kind;
  s.base_lr = base;
  for (long i : at) s.milestones.push_back({i, 0.5});
  return s;
}

}  // namespace

ScheduleSpec ScheduleSpec::s_long() {
  return halving(ScheduleKind::s_long, 1e-4, {400000, 600000, 800000, 1000000});
}

ScheduleSpec ScheduleSpec::s_fine() {
  return halving(ScheduleKind::s_fine, 1e-5, {200000, 300000, 400000, 500000});
}

ScheduleSpec ScheduleSpec::disrupted_ft() {
  auto s = halving(ScheduleKind::disrupted_ft, 1e-5, {100000, 150000, 200000, 250000});
  s.add_default_disruptions({300000, 450000}, 600000);
  return s;
}

ScheduleSpec ScheduleSpec::rob_mixed() {
  auto s = halving(ScheduleKind::rob_mixed, 3e-5, {100000, 150000, 200000, 250000});
  s.add_default_disruptions({300000, 450000, 600000, 750000}, 900000);
  return s;
}

ScheduleSpec ScheduleSpec::of_kind(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::s_long: return s_long();
    case ScheduleKind::s_fine: return s_fine();
    case ScheduleKind::disrupted_ft: return disrupted_ft();
    case ScheduleKind::rob_mixed: return rob_mixed();
    case ScheduleKind::custom: break;
  }
  ScheduleSpec s;
  s.kind = ScheduleKind::custom;
  return s;
}

ScheduleSpec& ScheduleSpec::add_default_disruptions(const std::vector<long>& iterations,
                                                    long horizon) {
  if (iterations.empty()) return *this;
  double start_lr = disruptions.empty() ? base_lr : disruptions.back().restart_lr;
  // Milestone offsets are stretched relative to the undisrupted first segment.
  const long first_len = disruptions.empty() ? iterations.front() : disruptions.front().iteration;
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const long end = i + 1 < iterations.size() ? iterations[i + 1] : horizon;
    if (end <= iterations[i]) {
      throw std::invalid_argument("schedule: disruption segments must have positive length");
    }
    start_lr *= 0.5;
    disruptions.push_back({iterations[i], start_lr,
                           static_cast<double>(end - iterations[i]) / static_cast<double>(first_len)});
  }
  validate();
  return *this;
}

double lr_at(const ScheduleSpec& spec, long iteration) {
  if (iteration < 0) throw std::invalid_argument("lr_at: iteration must be >= 0");
  long seg_start = 0;
  double lr = spec.base_lr, stretch = 1.0;
  for (const auto& d : spec.disruptions) {
    if (d.iteration > iteration) break;
    seg_start = d.iteration;
    lr = d.restart_lr;
    stretch = d.milestone_scale;
  }
  const double offset = static_cast<double>(iteration - seg_start);
  for (const auto& m : spec.milestones) {
    if (static_cast<double>(m.iteration) * stretch <= offset) lr *= m.multiplier;
  }
  return lr;
}

}  // namespace pwc
