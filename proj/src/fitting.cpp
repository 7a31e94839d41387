#include "sandsim/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <unordered_map>

#include "sandsim/error.hpp"
#include "sandsim/metrics.hpp"

namespace sandsim {

void FitConfig::validate() const {
  if (iterations < 0) fail(ErrorKind::InvalidArgument, "iterations must be >= 0");
  if (init_curves <= 0 || init_points_per_curve <= 0) fail(ErrorKind::InvalidArgument, "init counts must be positive");
  if (!(base_lr > 0) || lr_step <= 0 || !(lr_gamma > 0)) fail(ErrorKind::InvalidArgument, "invalid learning-rate schedule");
  if (lambda_spring < 0 || lambda_smooth < 0 || bg_scale_weight < 0 || bg_orient_weight < 0 ||
      lambda_geom.value_or(0) < 0 || lambda_scale.value_or(0) < 0) {
    fail(ErrorKind::InvalidArgument, "loss weights must be non-negative");
  }
  if (!(init_scale > kScaleFloor) || !(init_opacity > 0 && init_opacity < 1) || !(init_spacing > 0)) {
    fail(ErrorKind::InvalidArgument, "invalid initialization parameters");
  }
  if (topology_period < 0 || topology_freeze_tail < 0) fail(ErrorKind::InvalidArgument, "topology cadence must be >= 0");
  if (!(cutoff_sigma > 0)) fail(ErrorKind::InvalidArgument, "cutoff_sigma must be positive");
  topology.validate();
}

double FitConfig::resolved_lambda_geom(int w, int h) const {
  return lambda_geom.value_or(1.0 / (3.0 * w * h));
}

double FitConfig::resolved_lambda_scale(int w, int h) const {
  return lambda_scale.value_or(1.0 / (3.0 * w * h));
}

double loss_rec(const Image& rendered, const Image& target) {
  if (!rendered.same_shape(target)) fail(ErrorKind::DimensionMismatch, "rendered and target images differ in size");
  const auto a = rendered.data();
  const auto b = target.data();
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double loss_spring(const Stroke& stroke) {
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < stroke.kernels.size(); ++k) {
    sum += (stroke.kernels[k + 1].center - stroke.kernels[k].center).squaredNorm();
  }
  return sum;
}

double loss_smooth(const Stroke& stroke) {
  double sum = 0.0;
  for (std::size_t k = 1; k + 1 < stroke.kernels.size(); ++k) {
    sum += (stroke.kernels[k - 1].center - 2.0 * stroke.kernels[k].center + stroke.kernels[k + 1].center).squaredNorm();
  }
  return sum;
}

namespace {

bool is_background_stroke(const Stroke& s, const RegionPlan& plan) {
  return s.region && plan.is_background(*s.region);
}

double geometry_weight(const Stroke& s, const FitConfig& config) {
  if (!config.length_scaled_geometry) return 1.0;
  return static_cast<double>(config.init_points_per_curve) / static_cast<double>(s.size());
}

}  // namespace

ScaleOrientLoss loss_scale_and_orient(const Painting& painting, const RegionPlan& plan, double target_radius) {
  ScaleOrientLoss out;
  std::size_t kernels = 0;
  const Vec2 target = Vec2::Constant(target_radius);
  for (const auto& s : painting.strokes) {
    if (!is_background_stroke(s, plan)) continue;
    out.scale += (s.scale() - target).squaredNorm();
    for (const auto& k : s.kernels) {
      const double sn = std::sin(k.rotation);
      out.orient += sn * sn;
    }
    kernels += s.kernels.size();
  }
  if (kernels > 0) out.orient /= static_cast<double>(kernels);
  return out;
}

Objective evaluate_objective(const Painting& painting, const Image& target, const RegionPlan& plan,
                             const FitConfig& config) {
  if (target.width() != painting.width || target.height() != painting.height) {
    fail(ErrorKind::DimensionMismatch, "target does not match the canvas");
  }
  const RenderOptions ropt{config.cutoff_sigma, config.deterministic};
  Objective obj;
  obj.render = render(painting, ropt);

  LossReport& loss = obj.loss;
  loss.rec = loss_rec(obj.render.image, target);
  loss.psnr = psnr_from_mse(loss.rec);
  loss.strokes = painting.strokes.size();
  loss.kernels = painting.kernel_count();

  Image dimage(painting.width, painting.height);
  {
    const auto r = obj.render.image.data();
    const auto t = target.data();
    auto g = dimage.data();
    const double inv_n = 2.0 / static_cast<double>(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) g[i] = inv_n * (r[i] - t[i]);
  }
  obj.gradient = backward(painting, obj.render, dimage, ropt);

  const double lg = config.resolved_lambda_geom(painting.width, painting.height);
  const double ls = config.resolved_lambda_scale(painting.width, painting.height);
  const double w_spring = lg * config.lambda_spring;
  const double w_smooth = lg * config.lambda_smooth;

  std::size_t bg_kernels = 0;
  for (const auto& s : painting.strokes) {
    if (is_background_stroke(s, plan)) bg_kernels += s.kernels.size();
  }
  const Vec2 s_target = Vec2::Constant(config.bg_target_radius);

  for (std::size_t si = 0; si < painting.strokes.size(); ++si) {
    const Stroke& s = painting.strokes[si];
    StrokeGradient& g = obj.gradient.strokes[si];
    const double gw = geometry_weight(s, config);
    const auto& k = s.kernels;

    double spring = 0.0;
    for (std::size_t i = 0; i + 1 < k.size(); ++i) {
      const Vec2 d = k[i + 1].center - k[i].center;
      spring += d.squaredNorm();
      g.centers[i + 1] += 2.0 * w_spring * gw * d;
      g.centers[i] -= 2.0 * w_spring * gw * d;
    }
    double smooth = 0.0;
    for (std::size_t i = 1; i + 1 < k.size(); ++i) {
      const Vec2 lap = k[i - 1].center - 2.0 * k[i].center + k[i + 1].center;
      smooth += lap.squaredNorm();
      g.centers[i - 1] += 2.0 * w_smooth * gw * lap;
      g.centers[i] -= 4.0 * w_smooth * gw * lap;
      g.centers[i + 1] += 2.0 * w_smooth * gw * lap;
    }
    loss.spring += gw * spring;
    loss.smooth += gw * smooth;

    if (is_background_stroke(s, plan)) {
      const Vec2 scale = s.scale();
      const Vec2 diff = scale - s_target;
      loss.scale += diff.squaredNorm();
      const double ws = ls * config.bg_scale_weight;
      g.raw_scale[0] += ws * 2.0 * diff[0] * scale_activation_slope(s.raw_scale[0]);
      g.raw_scale[1] += ws * 2.0 * diff[1] * scale_activation_slope(s.raw_scale[1]);
      const double wo = ls * config.bg_orient_weight / static_cast<double>(bg_kernels);
      for (std::size_t i = 0; i < k.size(); ++i) {
        const double sn = std::sin(k[i].rotation);
        loss.orient += sn * sn;
        g.rotations[i] += wo * std::sin(2.0 * k[i].rotation);
      }
    }
  }
  if (bg_kernels > 0) loss.orient /= static_cast<double>(bg_kernels);

  loss.total = loss.rec + lg * (config.lambda_spring * loss.spring + config.lambda_smooth * loss.smooth) +
               ls * (config.bg_scale_weight * loss.scale + config.bg_orient_weight * loss.orient);
  if (!std::isfinite(loss.total)) fail(ErrorKind::NonFiniteLoss, "total loss is not finite");
  if (!obj.gradient.all_finite()) fail(ErrorKind::NonFiniteGradient, "objective gradient is not finite");
  return obj;
}

Painting initialize_painting(int width, int height, const FitConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Painting p;
  p.width = width;
  p.height = height;

  const int n = config.init_curves;
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<int> cells(static_cast<std::size_t>(grid) * grid);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  std::shuffle(cells.begin(), cells.end(), rng);

  const double cw = static_cast<double>(width) / grid;
  const double ch = static_cast<double>(height) / grid;
  const double half_len = 0.5 * config.init_spacing * (config.init_points_per_curve - 1);
  const Vec2 raw_scale = inverse_scale(Vec2::Constant(config.init_scale));
  const double raw_opacity = inverse_opacity(config.init_opacity);

  for (int c = 0; c < n; ++c) {
    const int cell = cells[static_cast<std::size_t>(c)];
    const Vec2 anchor((cell % grid + unit(rng)) * cw, (cell / grid + unit(rng)) * ch);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const Vec2 dir(std::cos(angle), std::sin(angle));

    Stroke s;
    s.id = StrokeId{c};
    s.raw_scale = raw_scale;
    s.raw_opacity = raw_opacity;
    for (int k = 0; k < config.init_points_per_curve; ++k) {
      Kernel kernel;
      kernel.center = anchor + dir * (-half_len + config.init_spacing * k);
      kernel.rotation = angle;
      kernel.ordinal = k;
      s.kernels.push_back(kernel);
    }
    p.strokes.push_back(std::move(s));
  }
  p.clamp_centers();
  return p;
}

namespace {

// Adam moments for one stroke: [cx, cy, rot] per kernel, then sx, sy, opacity.
struct MomentState {
  std::vector<double> m, v;
  int steps = 0;

  explicit MomentState(std::size_t kernels = 0) : m(3 * kernels + 3, 0.0), v(3 * kernels + 3, 0.0) {}
};

struct LearningRates {
  double center, rotation, attribute;
};

void adam_update(double& param, double grad, double& m, double& v, double lr, double bc1, double bc2,
                 const FitConfig& cfg) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad;
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
}

void optimizer_step(Painting& painting, const GradientSet& grads, std::vector<MomentState>& states,
                    const LearningRates& lr, const FitConfig& cfg) {
  for (std::size_t si = 0; si < painting.strokes.size(); ++si) {
    Stroke& s = painting.strokes[si];
    const StrokeGradient& g = grads.strokes[si];
    MomentState& st = states[si];
    ++st.steps;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, st.steps);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, st.steps);
    for (std::size_t k = 0; k < s.kernels.size(); ++k) {
      Kernel& kernel = s.kernels[k];
      adam_update(kernel.center[0], g.centers[k][0], st.m[3 * k], st.v[3 * k], lr.center, bc1, bc2, cfg);
      adam_update(kernel.center[1], g.centers[k][1], st.m[3 * k + 1], st.v[3 * k + 1], lr.center, bc1, bc2, cfg);
      adam_update(kernel.rotation, g.rotations[k], st.m[3 * k + 2], st.v[3 * k + 2], lr.rotation, bc1, bc2, cfg);
    }
    const std::size_t base = 3 * s.kernels.size();
    adam_update(s.raw_scale[0], g.raw_scale[0], st.m[base], st.v[base], lr.attribute, bc1, bc2, cfg);
    adam_update(s.raw_scale[1], g.raw_scale[1], st.m[base + 1], st.v[base + 1], lr.attribute, bc1, bc2, cfg);
    adam_update(s.raw_opacity, g.raw_opacity, st.m[base + 2], st.v[base + 2], lr.attribute, bc1, bc2, cfg);
  }
}

// Keeps moments of structurally untouched strokes; everything else restarts from zero.
std::vector<MomentState> remap_states(const Painting& before, std::vector<MomentState>& states,
                                      const Painting& after, const TopologySummary& summary) {
  std::unordered_map<StrokeId, std::size_t> old_index;
  for (std::size_t i = 0; i < before.strokes.size(); ++i) old_index[before.strokes[i].id] = i;
  std::vector<MomentState> out;
  out.reserve(after.strokes.size());
  for (const auto& s : after.strokes) {
    const bool touched = std::find(summary.touched.begin(), summary.touched.end(), s.id) != summary.touched.end();
    auto it = old_index.find(s.id);
    if (!touched && it != old_index.end() && before.strokes[it->second].size() == s.size()) {
      out.push_back(std::move(states[it->second]));
    } else {
      out.emplace_back(s.size());
    }
  }
  return out;
}

}  // namespace

FitResult fit(const Image& target, const RegionPlan& plan, const FitConfig& config, std::uint64_t seed,
              const FitObserver& observer) {
  config.validate();
  const int w = target.width();
  const int h = target.height();
  if ((config.width && config.width != w) || (config.height && config.height != h)) {
    fail(ErrorKind::DimensionMismatch, "target is " + std::to_string(w) + "x" + std::to_string(h) +
                                           " but the configured canvas is " + std::to_string(config.width) + "x" +
                                           std::to_string(config.height));
  }

  FitResult result;
  result.painting = classify_strokes(initialize_painting(w, h, config, seed), plan);
  std::vector<MomentState> states;
  for (const auto& s : result.painting.strokes) states.emplace_back(s.size());

  const double diagonal = std::hypot(static_cast<double>(w), static_cast<double>(h));
  const int topology_until = config.iterations - config.topology_freeze_tail;

  Painting& painting = result.painting;
  Painting last_good;
  for (int it = 0;; ++it) {
    Objective obj;
    try {
      obj = evaluate_objective(painting, target, plan, config);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteLoss && e.kind() != ErrorKind::NonFiniteGradient) throw;
      result.status = FitStatus::AbortedNonFinite;
      result.message = "iteration " + std::to_string(it) + ": " + e.what();
      if (it > 0) painting = std::move(last_good);
      return result;
    }
    last_good = painting;
    obj.loss.iteration = it;
    if (it == config.iterations) {
      result.trace.push_back(obj.loss);
      if (observer) observer(obj.loss, painting);
      break;
    }

    const double decay = std::pow(config.lr_gamma, it / config.lr_step);
    const double lr = config.base_lr * decay;
    const LearningRates rates{lr * diagonal * 0.01, lr, lr * 0.5};

    optimizer_step(painting, obj.gradient, states, rates, config);
    painting.clamp_centers();

    const int done = it + 1;
    if (config.topology_period > 0 && done % config.topology_period == 0 && done <= topology_until) {
      const double late = done > topology_until / 2 ? config.topology.late_prune_multiplier : 1.0;
      auto [next, summary] = topology_pass(painting, config.topology, late);
      next = classify_strokes(std::move(next), plan);
      states = remap_states(painting, states, next, summary);
      painting = std::move(next);
      obj.loss.topology = summary;
    }
    result.trace.push_back(obj.loss);
    if (observer) observer(obj.loss, painting);
  }
  return result;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<LossReport>& trace) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "iteration,rec,spring,smooth,scale,orient,total,psnr,strokes,kernels,"
         "points_merged,strokes_split,strokes_merged,strokes_pruned\n";
  out.precision(10);
  for (const auto& r : trace) {
    out << r.iteration << ',' << r.rec << ',' << r.spring << ',' << r.smooth << ',' << r.scale << ',' << r.orient
        << ',' << r.total << ',' << r.psnr << ',' << r.strokes << ',' << r.kernels;
    if (r.topology) {
      out << ',' << r.topology->points_merged << ',' << r.topology->strokes_split << ','
          << r.topology->strokes_merged << ',' << r.topology->strokes_pruned;
    } else {
      out << ",0,0,0,0";
    }
    out << '\n';
  }
}

}  // namespace sandsim
