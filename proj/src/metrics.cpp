#include "sandsim/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "sandsim/error.hpp"

namespace sandsim {

double psnr_from_mse(double mse) {
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::DimensionMismatch, "images are " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                           " and " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b);
  const auto x = a.data();
  const auto y = b.data();
  if (x.empty()) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - y[i]) * (x[i] - y[i]);
  return sum / static_cast<double>(x.size());
}

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;

// Separable Gaussian blur; taps falling outside the image are dropped and the
// remaining ones renormalized.
std::vector<double> gaussian_blur(const std::vector<double>& src, int w, int h) {
  std::array<double, 2 * kSsimRadius + 1> taps{};
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    taps[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
  }
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0, norm = 0;
      for (int i = std::max(-kSsimRadius, -x); i <= std::min(kSsimRadius, w - 1 - x); ++i) {
        acc += taps[i + kSsimRadius] * src[static_cast<std::size_t>(y) * w + x + i];
        norm += taps[i + kSsimRadius];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc / norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0, norm = 0;
      for (int i = std::max(-kSsimRadius, -y); i <= std::min(kSsimRadius, h - 1 - y); ++i) {
        acc += taps[i + kSsimRadius] * tmp[static_cast<std::size_t>(y + i) * w + x];
        norm += taps[i + kSsimRadius];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc / norm;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b);
  if (a.empty()) fail(ErrorKind::DimensionMismatch, "ssim of empty images");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int w = a.width(), h = a.height();
  const auto la = a.luma();
  const auto lb = b.luma();
  std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }
  const auto mu_a = gaussian_blur(la, w, h);
  const auto mu_b = gaussian_blur(lb, w, h);
  const auto e_aa = gaussian_blur(aa, w, h);
  const auto e_bb = gaussian_blur(bb, w, h);
  const auto e_ab = gaussian_blur(ab, w, h);
  double sum = 0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(la.size());
}

std::vector<GlcmOffset> default_glcm_offsets() { return {{0, 1}, {1, 0}, {1, 1}, {1, -1}}; }

std::vector<int> quantize_luma(const Image& img, int levels) {
  if (levels < 2) fail(ErrorKind::InvalidArgument, "GLCM needs at least 2 levels");
  const auto luma = img.luma();
  std::vector<int> q(luma.size());
  for (std::size_t i = 0; i < luma.size(); ++i) {
    const double v = std::clamp(luma[i], 0.0, 1.0);
    q[i] = std::min(static_cast<int>(std::floor(v * levels)), levels - 1);
  }
  return q;
}

std::vector<double> glcm_matrix(const std::vector<int>& quantized, int width, int height, int levels,
                                const GlcmOffset& offset) {
  if (levels < 2) fail(ErrorKind::InvalidArgument, "GLCM needs at least 2 levels");
  if (quantized.size() != static_cast<std::size_t>(width) * height) {
    fail(ErrorKind::DimensionMismatch, "quantized buffer does not match the image size");
  }
  std::vector<double> p(static_cast<std::size_t>(levels) * levels, 0.0);
  double total = 0;
  for (int r = 0; r < height; ++r) {
    const int r2 = r + offset.drow;
    if (r2 < 0 || r2 >= height) continue;
    for (int c = 0; c < width; ++c) {
      const int c2 = c + offset.dcol;
      if (c2 < 0 || c2 >= width) continue;
      const int i = quantized[static_cast<std::size_t>(r) * width + c];
      const int j = quantized[static_cast<std::size_t>(r2) * width + c2];
      p[static_cast<std::size_t>(i) * levels + j] += 1;
      p[static_cast<std::size_t>(j) * levels + i] += 1;
      total += 2;
    }
  }
  if (total > 0) {
    for (double& v : p) v /= total;
  }
  return p;
}

GlcmFeatures glcm_features(const Image& img, int levels, const std::vector<GlcmOffset>& offsets) {
  if (offsets.empty()) fail(ErrorKind::InvalidArgument, "GLCM needs at least one offset");
  const auto q = quantize_luma(img, levels);
  GlcmFeatures f;
  f.levels = levels;
  f.offsets = offsets;
  for (const auto& off : offsets) {
    const auto p = glcm_matrix(q, img.width(), img.height(), levels, off);
    for (int i = 0; i < levels; ++i) {
      for (int j = 0; j < levels; ++j) {
        const double v = p[static_cast<std::size_t>(i) * levels + j];
        if (v <= 0) continue;
        f.contrast += v * (i - j) * (i - j);
        f.entropy -= v * std::log2(v);
      }
    }
  }
  f.contrast /= static_cast<double>(offsets.size());
  f.entropy /= static_cast<double>(offsets.size());
  return f;
}

double gtc(const Image& generated, const Image& reference, int levels) {
  const GlcmFeatures r = glcm_features(reference, levels);
  if (r.contrast <= 0 || r.entropy <= 0) fail(ErrorKind::DegenerateReference, "reference has no GLCM texture");
  const GlcmFeatures g = glcm_features(generated, levels);
  return 0.5 * (std::abs(g.contrast - r.contrast) / r.contrast + std::abs(g.entropy - r.entropy) / r.entropy);
}

double dtw(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) fail(ErrorKind::EmptySequence, "dtw needs two non-empty sequences");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> table((n + 1) * (m + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return table[i * (m + 1) + j]; };
  at(0, 0) = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::abs(a[i - 1] - b[j - 1]) + std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)});
    }
  }
  return at(n, m);
}

FrameDistance parse_frame_distance(const std::string& text) {
  if (text == "l2") return FrameDistance::L2;
  if (text == "one_minus_ssim") return FrameDistance::OneMinusSsim;
  if (text == "external_file") return FrameDistance::ExternalFile;
  fail(ErrorKind::ParseError, "unknown frame distance '" + text + "'");
}

std::string to_string(FrameDistance mode) {
  switch (mode) {
    case FrameDistance::L2: return "l2";
    case FrameDistance::OneMinusSsim: return "one_minus_ssim";
    case FrameDistance::ExternalFile: return "external_file";
  }
  return "l2";
}

double rms_distance(const Image& a, const Image& b) { return std::sqrt(mse(a, b)); }

std::vector<double> convergence_curve(const std::vector<Image>& frames, const Image& target, FrameDistance mode) {
  if (mode == FrameDistance::ExternalFile) {
    fail(ErrorKind::InvalidArgument, "external_file distances come from CSV, not frames");
  }
  std::vector<double> curve(frames.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(frames.size()); ++i) {
    curve[i] = mode == FrameDistance::L2 ? rms_distance(frames[i], target)
                                         : std::max(0.0, 1.0 - ssim(frames[i], target));
  }
  return curve;
}

std::vector<double> normalize_curve(std::vector<double> curve) {
  if (curve.empty() || curve.front() == 0) return curve;
  const double first = curve.front();
  for (double& v : curve) v /= first;
  return curve;
}

double ddc_from_curves(const std::vector<double>& generated, const std::vector<double>& reference) {
  if (generated.size() < 2 || reference.size() < 2) {
    fail(ErrorKind::EmptySequence, "ddc needs at least two frames per sequence");
  }
  const double cost = dtw(normalize_curve(generated), normalize_curve(reference));
  return cost / static_cast<double>(std::max(generated.size(), reference.size()));
}

double ddc(const std::vector<Image>& generated, const std::vector<Image>& reference, const Image& target,
           FrameDistance mode) {
  if (generated.size() < 2 || reference.size() < 2) {
    fail(ErrorKind::EmptySequence, "ddc needs at least two frames per sequence");
  }
  return ddc_from_curves(convergence_curve(generated, target, mode), convergence_curve(reference, target, mode));
}

std::vector<double> read_distance_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::map<long, double> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string idx, dist;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, dist)) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected frame_index,distance");
    }
    try {
      const long i = std::stol(idx);
      const double d = std::stod(dist);
      if (d < 0 || !std::isfinite(d)) {
        fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": distance must be finite and >= 0");
      }
      if (!rows.emplace(i, d).second) {
        fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": duplicate frame index");
      }
    } catch (const std::invalid_argument&) {
      if (line_no == 1) continue;  // header
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": not a number");
    } catch (const std::out_of_range&) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": value out of range");
    }
  }
  std::vector<double> curve;
  curve.reserve(rows.size());
  for (const auto& [i, d] : rows) curve.push_back(d);
  return curve;
}

std::vector<Image> load_frame_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorKind::IoError, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_png(f));
  return frames;
}

nlohmann::json evaluate(const EvalInputs& in) {
  if (in.generated.empty() || in.reference.empty()) fail(ErrorKind::EmptySequence, "no frames to evaluate");
  const Image& gen = in.generated.back();
  const Image& ref = in.reference.back();

  nlohmann::json report;
  report["frames_generated"] = in.generated.size();
  report["frames_reference"] = in.reference.size();
  report["psnr"] = psnr(gen, ref);
  report["ssim"] = ssim(gen, ref);
  report["gtc"] = gtc(gen, ref, in.glcm_levels);
  const GlcmFeatures fg = glcm_features(gen, in.glcm_levels);
  const GlcmFeatures fr = glcm_features(ref, in.glcm_levels);
  report["glcm"] = {{"generated", {{"contrast", fg.contrast}, {"entropy", fg.entropy}}},
                    {"reference", {{"contrast", fr.contrast}, {"entropy", fr.entropy}}},
                    {"levels", in.glcm_levels}};

  std::vector<double> cg, cr;
  if (in.mode == FrameDistance::ExternalFile) {
    cg = read_distance_csv(in.generated_csv);
    cr = read_distance_csv(in.reference_csv);
  } else {
    cg = convergence_curve(in.generated, in.target, in.mode);
    cr = convergence_curve(in.reference, in.target, in.mode);
  }
  report["ddc"] = ddc_from_curves(cg, cr);
  report["frame_distance"] = to_string(in.mode);
  report["curve_generated"] = normalize_curve(cg);
  report["curve_reference"] = normalize_curve(cr);
  return report;
}

}  // namespace sandsim
