#include "sandsim/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <tuple>

#include "sandsim/error.hpp"

namespace sandsim {

void TopologyConfig::validate() const {
  if (!(point_merge_dist > 0 && stroke_merge_endpoint_dist > 0 && prune_opacity > 0 && prune_radius > 0 &&
        attribute_similarity > 0 && tangent_tolerance_deg > 0 && late_prune_multiplier > 0 && max_rounds > 0)) {
    fail(ErrorKind::InvalidArgument, "topology thresholds must be positive");
  }
}

TopologySummary& TopologySummary::operator+=(const TopologySummary& other) {
  points_merged += other.points_merged;
  strokes_split += other.strokes_split;
  strokes_merged += other.strokes_merged;
  strokes_pruned += other.strokes_pruned;
  touched.insert(touched.end(), other.touched.begin(), other.touched.end());
  return *this;
}

namespace {

// Mean of two pi-periodic angles.
double axial_mean(double a, double b) {
  return 0.5 * std::atan2(std::sin(2 * a) + std::sin(2 * b), std::cos(2 * a) + std::cos(2 * b));
}

double relative_difference(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  return m == 0 ? 0.0 : std::abs(a - b) / m;
}

bool spacing_ok(const std::vector<Kernel>& kernels, double min_gap, double max_gap) {
  for (std::size_t k = 0; k + 1 < kernels.size(); ++k) {
    const double gap = (kernels[k + 1].center - kernels[k].center).norm();
    if (gap < min_gap || gap > max_gap) return false;
  }
  return true;
}

struct Direction {
  Vec2 v;
  bool axial;  // from a lone kernel's rotation; sign carries no meaning
};

// Direction of travel leaving kernel `from` toward `to`, or the kernel axis when
// there is no neighbour.
Direction travel(const std::vector<Kernel>& seq, std::size_t from, std::optional<std::size_t> to) {
  if (to) {
    const Vec2 d = seq[*to].center - seq[from].center;
    if (d.norm() > 0) return {d.normalized(), false};
  }
  return {Vec2(std::cos(seq[from].rotation), std::sin(seq[from].rotation)), true};
}

bool aligned(const Direction& a, const Direction& b, double tolerance_deg) {
  double c = a.v.dot(b.v);
  if (a.axial || b.axial) c = std::abs(c);
  return c >= std::cos(tolerance_deg * std::numbers::pi / 180.0) - 1e-12;
}

std::vector<Kernel> reversed(const std::vector<Kernel>& k) { return {k.rbegin(), k.rend()}; }

}  // namespace

Stroke merge_points(const Stroke& stroke, const TopologyConfig& cfg) {
  Stroke out = stroke;
  bool changed = true;
  while (changed && out.kernels.size() > 1) {
    changed = false;
    std::vector<Kernel> swept;
    swept.reserve(out.kernels.size());
    swept.push_back(out.kernels.front());
    for (std::size_t k = 1; k < out.kernels.size(); ++k) {
      Kernel& last = swept.back();
      const Kernel& next = out.kernels[k];
      if ((next.center - last.center).norm() < cfg.point_merge_dist) {
        last.center = 0.5 * (last.center + next.center);
        last.rotation = axial_mean(last.rotation, next.rotation);
        changed = true;
      } else {
        swept.push_back(next);
      }
    }
    out.kernels = std::move(swept);
  }
  out.renumber();
  return out;
}

std::vector<Stroke> split_stroke(const Stroke& stroke, const TopologyConfig&) {
  const double limit = stroke.long_axis();
  std::vector<Stroke> pieces;
  Stroke current = stroke;
  current.kernels.clear();
  for (std::size_t k = 0; k < stroke.kernels.size(); ++k) {
    if (k > 0 && (stroke.kernels[k].center - stroke.kernels[k - 1].center).norm() > limit) {
      current.renumber();
      pieces.push_back(current);
      current.kernels.clear();
    }
    current.kernels.push_back(stroke.kernels[k]);
  }
  current.renumber();
  pieces.push_back(std::move(current));
  return pieces;
}

Painting merge_strokes(const Painting& painting, const TopologyConfig& cfg, TopologySummary* summary) {
  struct Candidate {
    double gap;
    std::size_t a, b;
    Stroke merged;
  };
  std::vector<Candidate> candidates;
  const auto& strokes = painting.strokes;

  for (std::size_t i = 0; i < strokes.size(); ++i) {
    for (std::size_t j = i + 1; j < strokes.size(); ++j) {
      const Stroke& a = strokes[i];
      const Stroke& b = strokes[j];
      if (a.region && b.region && *a.region != *b.region) continue;
      const Vec2 sa = a.scale(), sb = b.scale();
      if (relative_difference(a.opacity(), b.opacity()) > cfg.attribute_similarity ||
          relative_difference(sa[0], sb[0]) > cfg.attribute_similarity ||
          relative_difference(sa[1], sb[1]) > cfg.attribute_similarity) {
        continue;
      }
      const double na = static_cast<double>(a.size());
      const double nb = static_cast<double>(b.size());
      Stroke merged;
      merged.id = StrokeId{std::min(raw(a.id), raw(b.id))};
      merged.region = a.region ? a.region : b.region;
      merged.raw_scale = (na * a.raw_scale + nb * b.raw_scale) / (na + nb);
      merged.raw_opacity = (na * a.raw_opacity + nb * b.raw_opacity) / (na + nb);

      // a.end->b.start, a.end->b.end, a.start->b.start, b.end->a.start
      struct Join {
        const Stroke* first;
        bool reverse_first;
        const Stroke* second;
        bool reverse_second;
      };
      const Join joins[4] = {{&a, false, &b, false}, {&a, false, &b, true}, {&a, true, &b, false}, {&b, false, &a, false}};
      for (const Join& jn : joins) {
        const auto& fk = jn.first->kernels;
        const auto& sk = jn.second->kernels;
        const Vec2& tail = jn.reverse_first ? fk.front().center : fk.back().center;
        const Vec2& head = jn.reverse_second ? sk.back().center : sk.front().center;
        const double gap = (head - tail).norm();
        if (gap > cfg.stroke_merge_endpoint_dist) continue;
        const std::vector<Kernel> first = jn.reverse_first ? reversed(fk) : fk;
        const std::vector<Kernel> second = jn.reverse_second ? reversed(sk) : sk;
        std::vector<Kernel> seq = first;
        seq.insert(seq.end(), second.begin(), second.end());
        const std::size_t join = first.size();
        const Direction in = travel(seq, join - 1, join >= 2 ? std::optional(join - 2) : std::nullopt);
        const Direction out = travel(seq, join, join + 1 < seq.size() ? std::optional(join + 1) : std::nullopt);
        // `in` points backwards along the first part; flip it to the travel direction.
        const Direction in_forward{in.axial ? in.v : Vec2(-in.v), in.axial};
        if (!aligned(in_forward, out, cfg.tangent_tolerance_deg)) continue;
        merged.kernels = std::move(seq);
        merged.renumber();
        // The merge must survive the split and point rules, or the next pass would undo it.
        if (!spacing_ok(merged.kernels, cfg.point_merge_dist, merged.long_axis())) continue;
        candidates.push_back({gap, i, j, merged});
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(x.gap, x.a, x.b) < std::tie(y.gap, y.a, y.b);
  });

  std::vector<bool> used(strokes.size(), false);
  std::vector<std::optional<Stroke>> replacement(strokes.size());
  for (auto& c : candidates) {
    if (used[c.a] || used[c.b]) continue;
    used[c.a] = used[c.b] = true;
    if (summary) {
      ++summary->strokes_merged;
      summary->touched.push_back(c.merged.id);
    }
    replacement[c.a] = std::move(c.merged);
  }

  Painting out = painting;
  out.strokes.clear();
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    if (replacement[i]) {
      out.strokes.push_back(std::move(*replacement[i]));
    } else if (!used[i]) {
      out.strokes.push_back(strokes[i]);
    }
  }
  return out;
}

Painting prune_strokes(const Painting& painting, const TopologyConfig& cfg, double opacity_scale,
                       TopologySummary* summary) {
  Painting out = painting;
  const double min_opacity = cfg.prune_opacity * opacity_scale;
  std::erase_if(out.strokes, [&](const Stroke& s) {
    const bool drop = s.opacity() < min_opacity || s.long_axis() < cfg.prune_radius;
    if (drop && summary) ++summary->strokes_pruned;
    return drop;
  });
  return out;
}

std::pair<Painting, TopologySummary> topology_pass(const Painting& painting, const TopologyConfig& cfg,
                                                   double opacity_scale) {
  cfg.validate();
  TopologySummary total;
  Painting current = painting;
  for (int round = 0; round < cfg.max_rounds; ++round) {
    TopologySummary step;

    Painting split = current;
    split.strokes.clear();
    std::int64_t next_id = raw(current.next_stroke_id());
    for (const auto& s : current.strokes) {
      Stroke merged = merge_points(s, cfg);
      const int removed = static_cast<int>(s.size() - merged.size());
      if (removed > 0) {
        step.points_merged += removed;
        step.touched.push_back(s.id);
      }
      auto pieces = split_stroke(merged, cfg);
      if (pieces.size() > 1) {
        step.strokes_split += static_cast<int>(pieces.size() - 1);
        step.touched.push_back(s.id);
        for (std::size_t p = 1; p < pieces.size(); ++p) {
          pieces[p].id = StrokeId{next_id++};
          step.touched.push_back(pieces[p].id);
        }
      }
      for (auto& p : pieces) split.strokes.push_back(std::move(p));
    }

    Painting merged = merge_strokes(split, cfg, &step);
    current = prune_strokes(merged, cfg, opacity_scale, &step);
    const bool changed = step.total() > 0;
    total += step;
    if (!changed) break;
  }
  std::sort(total.touched.begin(), total.touched.end(), [](StrokeId a, StrokeId b) { return raw(a) < raw(b); });
  total.touched.erase(std::unique(total.touched.begin(), total.touched.end()), total.touched.end());
  return {std::move(current), std::move(total)};
}

}  // namespace sandsim
