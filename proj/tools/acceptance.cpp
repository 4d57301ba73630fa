// Acceptance run: one PASS/FAIL line per criterion, exit 0 iff all pass.
// Independent oracles here are deliberately re-derived rather than shared
// with the library.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "pwc/checkpoint.hpp"
#include "pwc/flow_ops.hpp"
#include "pwc/grad_suite.hpp"
#include "pwc/io.hpp"
#include "pwc/losses.hpp"
#include "pwc/metrics.hpp"
#include "pwc/model.hpp"
#include "pwc/schedule.hpp"
#include "pwc/train.hpp"

using namespace pwc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

Tensor<double> rand_t(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1 -------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = run_grad_suite(default_grad_suite(), {0, 1, 2});
  const double secs = seconds_since(t0);
  std::ostringstream report;
  const int code = report_grad_suite(results, report);
  std::cerr << report.str();
  double worst_op = 0, worst_e2e = 0;
  for (const auto& r : results) {
    double& slot = r.tolerance <= 1e-4 ? worst_op : worst_e2e;
    slot = std::max(slot, r.worst);
  }
  const bool has_all = results.size() >= 10;
  return {code == 0 && has_all && secs < 120.0,
          std::to_string(results.size()) + " operators, seeds {0,1,2}, worst per-op " + num(worst_op, 3) +
              " (tol 1e-4), worst end-to-end " + num(worst_e2e, 3) + " (tol 1e-3), " + num(secs, 3) + " s (limit 120 s)"};
}

// 2 -------------------------------------------------------------------------
Outcome cost_volume_oracle() {
  std::mt19937_64 rng(2);
  double worst = 0;
  std::size_t cases = 0;
  for (std::size_t H = 1; H <= 6; ++H)
    for (std::size_t W = 1; W <= 6; ++W)
      for (std::size_t N = 1; N <= 4; ++N)
        for (int d = 0; d <= 2; ++d) {
          const auto a = rand_t({1, N, H, W}, rng), b = rand_t({1, N, H, W}, rng);
          const auto cv = correlation_cost_volume(make_constant(a), make_constant(b), d).tensor.value();
          const int D = 2 * d + 1;
          if (cv.shape() != Shape{1, std::size_t(D * D), H, W}) return {false, "wrong output shape"};
          for (int dy = -d; dy <= d; ++dy)
            for (int dx = -d; dx <= d; ++dx)
              for (long y = 0; y < long(H); ++y)
                for (long x = 0; x < long(W); ++x) {
                  double acc = 0;
                  const long y2 = y + dy, x2 = x + dx;
                  if (y2 >= 0 && y2 < long(H) && x2 >= 0 && x2 < long(W))
                    for (std::size_t c = 0; c < N; ++c) acc += a.at(0, c, y, x) * b.at(0, c, y2, x2);
                  acc /= double(N);
                  worst = std::max(worst, std::abs(acc - cv.at(0, (dy + d) * D + (dx + d), y, x)));
                }
          ++cases;
        }
  return {worst <= 1e-6, std::to_string(cases) + " shapes (H, W <= 6, N <= 4, d <= 2), max abs diff " + num(worst, 3) +
                             " (tol 1e-6)"};
}

// 3 -------------------------------------------------------------------------
Outcome warping_properties() {
  std::mt19937_64 rng(3);
  // Zero flow.
  bool identity = true;
  for (int k = 0; k < 10; ++k) {
    const std::size_t h = 1 + rng() % 6, w = 1 + rng() % 6, c = 1 + rng() % 3;
    const auto f = rand_t({1, c, h, w}, rng);
    identity &= warp(make_constant(f), make_constant(Tensor<double>({1, 2, h, w}))).value() == f;
  }
  // Integer shifts against an index-shift oracle with zero fill.
  bool shifts = true;
  for (int k = 0; k < 50; ++k) {
    const std::size_t h = 1 + rng() % 6, w = 1 + rng() % 6, c = 1 + rng() % 3;
    const int u = int(rng() % 9) - 4, v = int(rng() % 9) - 4;
    const auto f = rand_t({1, c, h, w}, rng);
    Tensor<double> flow({1, 2, h, w});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        flow.at(0, 0, y, x) = u;
        flow.at(0, 1, y, x) = v;
      }
    const auto out = warp(make_constant(f), make_constant(flow)).value();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (long y = 0; y < long(h); ++y)
        for (long x = 0; x < long(w); ++x) {
          const long sy = y + v, sx = x + u;
          const double expect = (sy >= 0 && sy < long(h) && sx >= 0 && sx < long(w)) ? f.at(0, ch, sy, sx) : 0.0;
          shifts &= out.at(0, ch, y, x) == expect;
        }
  }
  // Values [0, 2] sampled halfway.
  const Tensor<double> pair({1, 1, 1, 2}, std::vector<double>{0.0, 2.0});
  const Tensor<double> half({1, 2, 1, 2}, std::vector<double>{0.5, 0.0, 0.0, 0.0});
  const double mid = warp(make_constant(pair), make_constant(half)).value().at(0, 0, 0, 0);
  return {identity && shifts && mid == 1.0, std::string("zero-flow identity ") + (identity ? "exact" : "BROKEN") +
                                                ", 50 integer shifts " + (shifts ? "exact" : "BROKEN") +
                                                ", midpoint of [0, 2] = " + num(mid, 17)};
}

// 4 -------------------------------------------------------------------------
// Hand count for L = 3, channels [4, 8, 16], estimator [8, 8], d = 4, no
// context: conv3x3(i, o) has 9 i o + o parameters.
std::size_t toy_hand_count() {
  auto conv = [](std::size_t i, std::size_t o) { return 9 * i * o + o; };
  std::size_t n = 0;
  // Pyramid: two convolutions per level.
  n += conv(3, 4) + conv(4, 4) + conv(4, 8) + conv(8, 8) + conv(8, 16) + conv(16, 16);
  const std::size_t cv = 81;
  // Level 3 (top): cv + c1; levels 2: cv + c1 + 2 flow channels. DenseNet.
  for (std::size_t in : {cv + 16, cv + 8 + 2}) {
    n += conv(in, 8) + conv(in + 8, 8) + conv(in + 16, 2);
  }
  return n;
}

Outcome structural_counts() {
  const double full = double(count_parameters(ModelConfig{}));
  const double nodense = double(count_parameters(apply_ablation(ModelConfig{}, "no-dense")));
  ModelConfig toy;
  toy.num_levels = 3;
  toy.output_level = 2;
  toy.pyramid_channels = {4, 8, 16};
  toy.estimator_channels = {8, 8};
  toy.use_context = false;
  const std::size_t toy_count = count_parameters(toy);
  const std::size_t hand = toy_hand_count();
  bool variants = true;
  std::string bad;
  for (const auto& v : ablation_variants()) {
    const auto cfg = apply_ablation(ModelConfig{}, v);
    if (init_parameters<float>(cfg, 0).total_count() != count_parameters(cfg)) {
      variants = false;
      bad += " " + v;
    }
  }
  const bool ok = std::abs(full / 8.75e6 - 1) <= 0.10 && std::abs(nodense / 4.08e6 - 1) <= 0.15 &&
                  toy_count == hand && variants;
  return {ok, "default " + num(full / 1e6, 6) + "M (8.75M +-10%), no-DenseNet " + num(nodense / 1e6, 6) +
                  "M (4.08M +-15%), toy " + std::to_string(toy_count) + " vs hand " + std::to_string(hand) + ", " +
                  std::to_string(ablation_variants().size()) + " variants instantiated = analytic" +
                  (variants ? "" : " except" + bad)};
}

// 5 -------------------------------------------------------------------------
Outcome pyramid_geometry() {
  ModelConfig cfg;
  cfg.pyramid_channels = {2, 2, 2, 2, 2, 2};
  const auto params = init_parameters<float>(cfg, 5);
  const auto pyr = extract_pyramid(make_constant(Tensor<float>({1, 3, 384, 448}, 0.5f)), cfg, params);
  const auto& top = pyr.levels.at(6).value();
  return {top.width() == 7 && top.height() == 6,
          "448x384 input -> level 6 is " + std::to_string(top.width()) + "x" + std::to_string(top.height()) +
              " (expected 7x6)"};
}

// 6 -------------------------------------------------------------------------
// Weight decay is scaled down with the image area (4e-4 at 448x384 is 2/3 of
// the initial loss at 64x64). Batch 2 with two late halvings was the best
// recipe that fits three runs into the time limit.
struct ToyTraining {
  long iterations = 3000;
  std::size_t batch_size = 2;
  double lr = 3e-4;
  std::vector<Milestone> milestones{{2000, 0.5}, {2500, 0.5}};
  double gamma = 1e-5;
  std::size_t val_samples = 64;  // 16 left the untrained baseline noisy by ~15% across seeds
};

RunConfig toy_run(const ToyTraining& t, double max_disp, bool warping, std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.precision = Precision::f32;
  c.model.pyramid_channels = {8, 16, 32, 48, 64, 96};
  c.model.use_warping = warping;
  c.loss.gamma = t.gamma;
  c.schedule = ScheduleSpec{};
  c.schedule.base_lr = t.lr;
  // Milestones are given for 3000 iterations and scale with --toy-iterations.
  for (auto m : t.milestones) {
    m.iteration = m.iteration * t.iterations / 3000;
    const auto& ms = c.schedule.milestones;
    if (m.iteration > 0 && (ms.empty() || m.iteration > ms.back().iteration)) c.schedule.milestones.push_back(m);
  }
  c.data.synth.height = 64;
  c.data.synth.width = 64;
  c.data.synth.max_displacement = max_disp;
  c.data.motions = {MotionKind::translate, MotionKind::rotate};
  c.data.val_samples = t.val_samples;
  c.train.iterations = t.iterations;
  c.train.batch_size = t.batch_size;
  c.train.val_every = 0;
  c.train.log_every = 500;
  c.validate();
  return c;
}

Outcome toy_convergence(const fs::path& work, const ToyTraining& t) {
  const auto t0 = Clock::now();
  const auto base = train(toy_run(t, 8.0, true, 6), work / "md8_warp", &std::cerr);
  const double reduction = 1.0 - base.final_val_aepe / base.initial_val_aepe;
  const auto warp16 = train(toy_run(t, 16.0, true, 6), work / "md16_warp", &std::cerr);
  const auto nowarp16 = train(toy_run(t, 16.0, false, 6), work / "md16_nowarp", &std::cerr);
  const double secs = seconds_since(t0);
  const bool ok = reduction >= 0.80 && nowarp16.final_val_aepe > warp16.final_val_aepe && secs < 1800.0;
  return {ok, "md8 AEPE " + num(base.initial_val_aepe, 4) + " -> " + num(base.final_val_aepe, 4) + " (" +
                  num(100 * reduction, 3) + "% reduction, need >= 80%); md16 warping " +
                  num(warp16.final_val_aepe, 4) + " vs no-warping " + num(nowarp16.final_val_aepe, 4) +
                  " (need no-warping worse); " + num(secs / 60, 3) + " min (limit 30)"};
}

// 7 -------------------------------------------------------------------------
Outcome loss_values() {
  ParameterStore<double> none;
  auto one_pixel = [](int level, double du, double dv) {
    MultiLevelFlow<double> pred;
    pred.flows[level] = {make_constant(Tensor<double>({1, 2, 1, 1}, std::vector<double>{du, dv})),
                         FlowScale::internal_scale, level};
    return pred;
  };
  auto zero_sup = [](std::initializer_list<std::pair<int, std::size_t>> levels) {
    Supervision<double> s;
    for (auto [l, n] : levels) s[l] = {Tensor<double>({1, 2, n, n}), Tensor<double>({1, 1, n, n}, 1.0)};
    return s;
  };
  LossConfig single;
  single.alpha = {{2, 1.0}};
  single.gamma = 0;
  std::vector<std::pair<double, double>> got_expect;
  // Exact match.
  got_expect.push_back({multiscale_loss(one_pixel(2, 0, 0), zero_sup({{2, 1}}), none, single).value()[0], 0.0});
  // (3, 4) at a single pixel.
  got_expect.push_back({multiscale_loss(one_pixel(2, 3, 4), zero_sup({{2, 1}}), none, single).value()[0], 5.0});
  // Unit deviation at one level-6 pixel with default alphas.
  {
    LossConfig c;
    c.gamma = 0;
    MultiLevelFlow<double> pred;
    for (int l = 2; l <= 6; ++l) {
      const std::size_t n = std::size_t{1} << (7 - l);
      Tensor<double> f({1, 2, n, n});
      if (l == 6) f.at(0, 1, 1, 0) = 1.0;
      pred.flows[l] = {make_constant(f), FlowScale::internal_scale, l};
    }
    got_expect.push_back(
        {multiscale_loss(pred, zero_sup({{2, 32}, {3, 16}, {4, 8}, {5, 4}, {6, 2}}), none, c).value()[0], 0.32});
  }
  // Robust penalty: the epsilon^q floor and (1 + 1 + 0.01)^0.4.
  got_expect.push_back({robust_loss(one_pixel(2, 0, 0), zero_sup({{2, 1}}), none, single).value()[0],
                        std::pow(0.01, 0.4)});
  got_expect.push_back({robust_loss(one_pixel(2, 1, 1), zero_sup({{2, 1}}), none, single).value()[0],
                        std::pow(2.01, 0.4)});
  double worst = 0;
  for (auto [g, e] : got_expect) worst = std::max(worst, std::abs(g - e));
  return {worst <= 1e-6, std::to_string(got_expect.size()) +
                             " worked examples (0, 5, 0.32, 0.01^0.4, 2.01^0.4), max abs error " + num(worst, 3) +
                             " (tol 1e-6)"};
}

// 8 -------------------------------------------------------------------------
Outcome schedule_values() {
  const auto s = ScheduleSpec::s_long();
  const double a = lr_at(s, 0), b = lr_at(s, 500000), c = lr_at(s, 900000);
  const bool ok = std::abs(a - 1e-4) <= 1e-15 && std::abs(b - 5e-5) <= 1e-15 && std::abs(c - 1.25e-5) <= 1e-15;
  return {ok, "s_long lr at 0 / 0.5M / 0.9M = " + num(a) + " / " + num(b) + " / " + num(c) +
                  " (expected 1e-4 / 5e-5 / 1.25e-5)"};
}

// 9 -------------------------------------------------------------------------
Outcome metrics_and_io(const fs::path& work) {
  auto constant = [](std::size_t h, std::size_t w, double u, double v) {
    Tensor<double> f({1, 2, h, w});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        f.at(0, 0, y, x) = u;
        f.at(0, 1, y, x) = v;
      }
    return f;
  };
  const Tensor<double> full({1, 1, 4, 4}, 1.0), one({1, 1, 1, 1}, 1.0);
  std::mt19937_64 rng(9);
  const auto gt = rand_t({1, 2, 4, 4}, rng, -5, 5);
  auto shifted = gt;
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      shifted.at(0, 0, y, x) += 3;
      shifted.at(0, 1, y, x) += 4;
    }
  // Left half error 2 and masked out, right half exact.
  auto half = constant(4, 4, 0, 0);
  Tensor<double> half_mask({1, 1, 4, 4}, 1.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 2; ++x) {
      half.at(0, 0, y, x) = 2;
      half_mask.at(0, 0, y, x) = 0;
    }
  const bool metric_ok =
      aepe(gt, gt, full) == 0.0 && std::abs(aepe(shifted, gt, full) - 5.0) <= 1e-12 &&
      aepe(half, constant(4, 4, 0, 0), half_mask) == 0.0 &&
      fl_all(constant(1, 1, 15, 0), constant(1, 1, 10, 0), one) == 100.0 &&
      fl_all(constant(1, 1, 2, 0), constant(1, 1, 0, 0), one) == 0.0 &&
      fl_all(constant(1, 1, 0, 104), constant(1, 1, 0, 100), one) == 0.0;

  fs::create_directories(work);
  const auto sample = gen_sample(SynthSpec{64, 64, MotionKind::rotate, 8.0, TextureKind::smoothed_noise, true, 0, 9});
  const auto flo = work / "rt.flo", flo2 = work / "rt2.flo";
  write_flo(flo, sample.flow);
  const auto back = read_flo(flo);
  write_flo(flo2, back);
  const bool flo_ok = back == sample.flow && slurp(flo) == slurp(flo2) && fs::file_size(flo) == 12 + 8 * 64 * 64;

  const auto mixed = work / "mixed";
  write_dataset_dir(mixed, gen_dataset(SynthSpec{}, {MotionKind::translate}, 4));
  write_dataset_dir(work / "odd", {gen_sample(SynthSpec{48, 64, MotionKind::translate, 4.0})});
  for (const char* suffix : {"_img1.png", "_img2.png", "_flow.flo", "_mask.png"})
    fs::rename(work / "odd" / (std::string("0000") + suffix), mixed / (std::string("0002x") + suffix));
  bool guard_ok = false;
  std::string guard_msg;
  try {
    load_dataset_dir(mixed, true);
  } catch (const FormatError& e) {
    guard_msg = e.what();
    guard_ok = guard_msg.find("0002x") != std::string::npos;
  }
  return {metric_ok && flo_ok && guard_ok, std::string("metric examples ") + (metric_ok ? "exact" : "WRONG") +
                                               ", .flo round trip " + (flo_ok ? "bit-identical" : "DIFFERS") +
                                               ", mixed-resolution directory " +
                                               (guard_ok ? "rejected" : "NOT rejected")};
}

// 10 ------------------------------------------------------------------------
Outcome determinism(const fs::path& work) {
  RunConfig c;
  c.seed = 10;
  c.precision = Precision::f64;
  c.model.pyramid_channels = {4, 8, 12, 16, 24, 32};
  c.model.estimator_channels = {16, 16, 12, 8, 8};
  c.model.context_channels = {16, 16, 16, 12, 8, 8};
  c.data.synth.height = 64;
  c.data.synth.width = 64;
  c.data.val_samples = 2;
  c.train.iterations = 5;
  c.train.batch_size = 2;
  c.train.val_every = 0;
  c.train.log_every = 0;
  const auto a = train(c, work / "det_a");
  const auto b = train(c, work / "det_b");
  const auto bytes_a = slurp(a.final_checkpoint), bytes_b = slurp(b.final_checkpoint);
  const bool same = bytes_a == bytes_b && !bytes_a.empty() &&
                    slurp(checkpoint_path(work / "det_a", 0)) == slurp(checkpoint_path(work / "det_b", 0));
  return {same, "two f64 runs of " + std::to_string(c.train.iterations) + " iterations: final checkpoints (" +
                    std::to_string(bytes_a.size()) + " bytes) " + (same ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work_dir;
  bool keep = false;
  ToyTraining toy;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--work-dir", work_dir, "Scratch directory (default: a fresh temp directory)");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  app.add_option("--toy-iterations", toy.iterations, "Iterations per toy training run");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir.empty()
                            ? fs::temp_directory_path() / ("pwc_acceptance_" + std::to_string(::getpid()))
                            : fs::path(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"cost-volume oracle", cost_volume_oracle},
      {"warping properties", warping_properties},
      {"structural counts", structural_counts},
      {"pyramid geometry", pyramid_geometry},
      {"toy convergence", [&] { return toy_convergence(work, toy); }},
      {"loss values", loss_values},
      {"schedule", schedule_values},
      {"metrics and io", [&] { return metrics_and_io(work / "io"); }},
      {"determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
  }
  if (!keep) fs::remove_all(work);
  return failed ? 1 : 0;
}
