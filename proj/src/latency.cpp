#include "eve/latency.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace eve {

using nlohmann::json;

std::string mode_name(ComputeMode m) {
  switch (m) {
    case ComputeMode::Cpu: return "cpu";
    case ComputeMode::LeaRegular: return "lea_regular";
    case ComputeMode::LeaIrregular: return "lea_irregular";
  }
  return "?";
}

ComputeMode parse_mode(const std::string& s) {
  if (s == "cpu") return ComputeMode::Cpu;
  if (s == "lea_regular") return ComputeMode::LeaRegular;
  if (s == "lea_irregular") return ComputeMode::LeaIrregular;
  throw std::runtime_error("unknown compute mode: " + s);
}

static std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Fc: return "fc";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

static LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "fc") return LayerKind::Fc;
  if (s == "pool") return LayerKind::Pool;
  throw std::runtime_error("unknown layer kind: " + s);
}

LayerKind layer_kind(const LayerDef& layer) {
  if (std::holds_alternative<ConvLayer>(layer)) return LayerKind::Conv;
  if (std::holds_alternative<FcLayer>(layer)) return LayerKind::Fc;
  return LayerKind::Pool;
}

long mac_count(const LayerDef& layer, const std::array<int, 3>& in_shape) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    long oh = (in_shape[1] - c->kh) / c->stride + 1;
    long ow = (in_shape[2] - c->kw) / c->stride + 1;
    return static_cast<long>(c->out_ch) * oh * ow * c->in_ch * c->kh * c->kw;
  }
  if (const auto* f = std::get_if<FcLayer>(&layer))
    return static_cast<long>(f->m) * f->n;
  const auto& p = std::get<PoolLayer>(layer);
  long oh = in_shape[1] / p.size, ow = in_shape[2] / p.size;
  return static_cast<long>(in_shape[0]) * oh * ow * p.size * p.size;
}

long CalibrationSample::macs() const {
  LayerDef layer;
  switch (kind) {
    case LayerKind::Conv:
      layer = ConvLayer{in_ch, out_ch, kh, kw, 1, Activation::None};
      break;
    case LayerKind::Fc:
      layer = FcLayer{in_ch, out_ch, 1, 1, Activation::None};  // m=in_ch, n=out_ch
      break;
    case LayerKind::Pool:
      layer = PoolLayer{PoolLayer::Kind::Max, kh};
      break;
  }
  return mac_count(layer, {in_ch, input_h, input_w});
}

const ProfileEntry& LatencyProfile::at(ComputeMode mode, LayerKind kind) const {
  auto it = entries.find({mode, kind});
  if (it == entries.end())
    throw std::runtime_error("latency profile has no entry for mode " +
                             mode_name(mode) + ", layer " + kind_name(kind));
  return it->second;
}

LatencyProfile fit_profile(const std::vector<CalibrationSample>& samples) {
  std::map<std::pair<ComputeMode, LayerKind>, std::vector<const CalibrationSample*>> groups;
  for (const auto& s : samples) groups[{s.mode, s.kind}].push_back(&s);
  LatencyProfile profile;
  for (const auto& [key, group] : groups) {
    if (group.size() < 2)
      throw std::runtime_error("fit_profile: need >= 2 samples for mode " +
                               mode_name(key.first) + ", layer " +
                               kind_name(key.second));
    // x = kept MACs, y = latency
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(group.size());
    for (const auto* s : group) {
      double x = (1.0 - s->sparsity) * static_cast<double>(s->macs());
      sx += x;
      sy += s->latency_s;
      sxx += x * x;
      sxy += x * s->latency_s;
    }
    double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12 * std::max(1.0, sxx))
      throw std::runtime_error("fit_profile: rank-deficient calibration for mode " +
                               mode_name(key.first) + " (no sparsity variation)");
    ProfileEntry e;
    e.slope = (n * sxy - sx * sy) / denom;
    e.intercept = (sy - e.slope * sx) / n;
    double ss = 0;
    for (const auto* s : group) {
      double x = (1.0 - s->sparsity) * static_cast<double>(s->macs());
      double r = s->latency_s - (e.slope * x + e.intercept);
      ss += r * r;
    }
    e.residual_rms = std::sqrt(ss / n);
    e.sample_count = static_cast<int>(group.size());
    profile.entries[key] = e;
  }
  return profile;
}

double predict_layer(const LatencyProfile& profile, const LayerDef& layer,
                     const std::array<int, 3>& in_shape, double kept_fraction,
                     ComputeMode mode) {
  if (kept_fraction <= 0.0 || kept_fraction > 1.0)
    throw std::runtime_error("predict_layer: kept_fraction must be in (0,1]");
  const ProfileEntry& e = profile.at(mode, layer_kind(layer));
  return e.slope * kept_fraction * static_cast<double>(mac_count(layer, in_shape)) +
         e.intercept;
}

double predict_model(const LatencyProfile& profile, const NetworkDef& def,
                     const ModelAssignment& assignment,
                     const PatternLibrary& library, ComputeMode mode) {
  if (assignment.kernel_patterns.size() != def.layers.size())
    throw std::runtime_error("predict_model: assignment does not cover network");
  auto shapes = def.activation_shapes();
  double total = 0;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    const LayerDef& l = def.layers[li];
    double kept = layer_prunable(l)
                      ? layer_kept_fraction(l, assignment.kernel_patterns[li], library)
                      : 1.0;
    total += predict_layer(profile, l, shapes[li], kept, mode);
  }
  return total;
}

std::string calibration_to_csv(const std::vector<CalibrationSample>& samples) {
  std::ostringstream out;
  out << "mode,layer_type,in_ch,out_ch,kh,kw,input_h,input_w,sparsity,latency_s\n";
  out.precision(12);
  for (const auto& s : samples)
    out << mode_name(s.mode) << ',' << kind_name(s.kind) << ',' << s.in_ch << ','
        << s.out_ch << ',' << s.kh << ',' << s.kw << ',' << s.input_h << ','
        << s.input_w << ',' << s.sparsity << ',' << s.latency_s << '\n';
  return out.str();
}

std::vector<CalibrationSample> calibration_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<CalibrationSample> samples;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) { header = false; continue; }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 10)
      throw std::runtime_error("calibration csv: expected 10 fields, got " +
                               std::to_string(fields.size()));
    CalibrationSample s;
    s.mode = parse_mode(fields[0]);
    s.kind = parse_kind(fields[1]);
    s.in_ch = std::stoi(fields[2]);
    s.out_ch = std::stoi(fields[3]);
    s.kh = std::stoi(fields[4]);
    s.kw = std::stoi(fields[5]);
    s.input_h = std::stoi(fields[6]);
    s.input_w = std::stoi(fields[7]);
    s.sparsity = std::stod(fields[8]);
    s.latency_s = std::stod(fields[9]);
    if (s.sparsity < 0 || s.sparsity >= 1 || s.latency_s <= 0)
      throw std::runtime_error("calibration csv: out-of-range sample");
    samples.push_back(s);
  }
  return samples;
}

std::vector<CalibrationSample> calibration_from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration csv: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return calibration_from_csv(ss.str());
}

std::string LatencyProfile::to_json_text() const {
  json j;
  j["note"] = note;
  j["entries"] = json::array();
  for (const auto& [key, e] : entries)
    j["entries"].push_back({{"mode", mode_name(key.first)},
                            {"layer_type", kind_name(key.second)},
                            {"slope", e.slope},
                            {"intercept", e.intercept},
                            {"residual_rms", e.residual_rms},
                            {"samples", e.sample_count}});
  return j.dump(2);
}

LatencyProfile LatencyProfile::from_json_text(const std::string& text) {
  json j = json::parse(text);
  LatencyProfile p;
  p.note = j.value("note", "");
  for (const auto& je : j.at("entries")) {
    ProfileEntry e;
    e.slope = je.at("slope").get<double>();
    e.intercept = je.at("intercept").get<double>();
    e.residual_rms = je.value("residual_rms", 0.0);
    e.sample_count = je.value("samples", 0);
    p.entries[{parse_mode(je.at("mode").get<std::string>()),
               parse_kind(je.at("layer_type").get<std::string>())}] = e;
  }
  return p;
}

}  // namespace eve
