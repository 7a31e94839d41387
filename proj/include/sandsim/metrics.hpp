#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sandsim/image.hpp"

namespace sandsim {

inline constexpr double kPsnrCap = 100.0;

/// Peak 1.0, capped at kPsnrCap.
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b);

/// Mean SSIM over Rec. 601 luma with an 11x11 Gaussian window (sigma 1.5).
/// The window is clipped at the border and renormalized.
double ssim(const Image& a, const Image& b);

struct GlcmOffset {
  int drow = 0;
  int dcol = 0;
};

std::vector<GlcmOffset> default_glcm_offsets();

struct GlcmFeatures {
  double contrast = 0;
  double entropy = 0;  // bits
  int levels = 32;
  std::vector<GlcmOffset> offsets;
};

/// Symmetrized, normalized co-occurrence matrix (levels x levels, row-major)
/// of already quantized gray levels.
std::vector<double> glcm_matrix(const std::vector<int>& quantized, int width, int height, int levels,
                                const GlcmOffset& offset);

/// Luma quantized to `levels` bins: min(floor(v * levels), levels - 1).
std::vector<int> quantize_luma(const Image& img, int levels);

GlcmFeatures glcm_features(const Image& img, int levels = 32,
                           const std::vector<GlcmOffset>& offsets = default_glcm_offsets());

/// 0.5 * (|c_g - c_r| / c_r + |e_g - e_r| / e_r). Throws DegenerateReference
/// when the reference has zero contrast or entropy.
double gtc(const Image& generated, const Image& reference, int levels = 32);

/// Absolute-difference DTW with steps (1,0), (0,1), (1,1). Throws EmptySequence.
double dtw(const std::vector<double>& a, const std::vector<double>& b);

enum class FrameDistance { L2, OneMinusSsim, ExternalFile };

FrameDistance parse_frame_distance(const std::string& text);
std::string to_string(FrameDistance mode);

/// Root-mean-square difference over all pixels and channels.
double rms_distance(const Image& a, const Image& b);

/// Distance of each frame to `target`.
std::vector<double> convergence_curve(const std::vector<Image>& frames, const Image& target, FrameDistance mode);

/// Divides by the first value unless it is zero.
std::vector<double> normalize_curve(std::vector<double> curve);

/// dtw of the two normalized curves over the longer length.
double ddc_from_curves(const std::vector<double>& generated, const std::vector<double>& reference);

double ddc(const std::vector<Image>& generated, const std::vector<Image>& reference, const Image& target,
           FrameDistance mode);

/// CSV rows `frame_index,distance`; an optional header row is skipped. Rows
/// are ordered by frame index.
std::vector<double> read_distance_csv(const std::filesystem::path& path);

/// Every *.png in the directory, sorted by file name.
std::vector<Image> load_frame_sequence(const std::filesystem::path& dir);

struct EvalInputs {
  std::vector<Image> generated;
  std::vector<Image> reference;
  Image target;
  FrameDistance mode = FrameDistance::L2;
  std::filesystem::path generated_csv;  // ExternalFile mode only
  std::filesystem::path reference_csv;
  int glcm_levels = 32;
};

/// PSNR/SSIM/GTC of the last generated frame against the last reference
/// frame, plus DDC over the sequences.
nlohmann::json evaluate(const EvalInputs& inputs);

}  // namespace sandsim
