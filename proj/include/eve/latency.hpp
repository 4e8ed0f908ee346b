#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eve/nn.hpp"
#include "eve/patterns.hpp"

namespace eve {

enum class ComputeMode { Cpu, LeaRegular, LeaIrregular };
enum class LayerKind { Conv, Fc, Pool };

std::string mode_name(ComputeMode m);
ComputeMode parse_mode(const std::string& s);
LayerKind layer_kind(const LayerDef& layer);

/// MACs of a layer at full density, given its input shape (ch, h, w).
long mac_count(const LayerDef& layer, const std::array<int, 3>& in_shape);

struct CalibrationSample {
  ComputeMode mode = ComputeMode::Cpu;
  LayerKind kind = LayerKind::Conv;
  int in_ch = 0, out_ch = 0, kh = 0, kw = 0, input_h = 0, input_w = 0;
  double sparsity = 0;   // pruned fraction in [0,1)
  double latency_s = 0;

  long macs() const;  // full-density MACs of the described layer
};

struct ProfileEntry {
  double slope = 0;      // seconds per kept MAC
  double intercept = 0;  // fixed seconds
  double residual_rms = 0;
  int sample_count = 0;
};

struct LatencyProfile {
  std::map<std::pair<ComputeMode, LayerKind>, ProfileEntry> entries;
  std::string note;

  const ProfileEntry& at(ComputeMode mode, LayerKind kind) const;
  std::string to_json_text() const;
  static LatencyProfile from_json_text(const std::string& text);
};

/// Ordinary least squares of latency vs kept-MAC count, per (mode, layer
/// kind). Throws if any group has < 2 samples or no sparsity variation.
LatencyProfile fit_profile(const std::vector<CalibrationSample>& samples);

double predict_layer(const LatencyProfile& profile, const LayerDef& layer,
                     const std::array<int, 3>& in_shape, double kept_fraction,
                     ComputeMode mode);

/// Whole-model prediction: prunable layers use their average kept fraction,
/// pool layers contribute their fixed profile cost.
double predict_model(const LatencyProfile& profile, const NetworkDef& def,
                     const ModelAssignment& assignment,
                     const PatternLibrary& library, ComputeMode mode);

/// CSV: mode,layer_type,in_ch,out_ch,kh,kw,input_h,input_w,sparsity,latency_s
std::string calibration_to_csv(const std::vector<CalibrationSample>& samples);
std::vector<CalibrationSample> calibration_from_csv(const std::string& text);
std::vector<CalibrationSample> calibration_from_csv_file(const std::string& path);

}  // namespace eve
