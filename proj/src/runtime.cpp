#include "eve/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

namespace eve {

using nlohmann::json;

double DeviceProfile::mode_mult(ComputeMode mode) const {
  switch (mode) {
    case ComputeMode::Cpu: return 1.0;
    case ComputeMode::LeaRegular: return lea_regular_mult;
    case ComputeMode::LeaIrregular: return lea_irregular_mult;
  }
  return 1.0;
}

double expected_cycle_duration(const DeviceProfile& device, double harvest_w) {
  double swing = device.energy_on() - device.energy_off();
  double charge = swing / harvest_w;
  double drain = device.active_power - harvest_w;
  if (drain <= 0) return charge;  // never powers off once running
  double usable = swing - device.checkpoint_margin_factor * device.checkpoint_energy;
  return charge + usable / drain + device.checkpoint_time + device.restore_time;
}

void calibrate_tracker_thresholds(DeviceProfile& device) {
  double th = expected_cycle_duration(device, device.level_power_high);
  double tm = expected_cycle_duration(device, device.level_power_medium);
  double tl = expected_cycle_duration(device, device.level_power_low);
  device.tracker_threshold_high_s = 0.5 * (th + tm);
  device.tracker_threshold_medium_s = 0.5 * (tm + tl);
}

std::string DeviceProfile::to_json_text() const {
  json j = {{"capacitance", capacitance},
            {"v_on", v_on},
            {"v_off", v_off},
            {"active_power", active_power},
            {"t_mac", t_mac},
            {"layer_overhead_s", layer_overhead_s},
            {"checkpoint_time", checkpoint_time},
            {"checkpoint_energy", checkpoint_energy},
            {"restore_time", restore_time},
            {"restore_energy", restore_energy},
            {"write_time_per_weight", write_time_per_weight},
            {"write_energy_per_weight", write_energy_per_weight},
            {"extract_time_per_weight", extract_time_per_weight},
            {"extract_energy_per_weight", extract_energy_per_weight},
            {"lea_regular_mult", lea_regular_mult},
            {"lea_irregular_mult", lea_irregular_mult},
            {"tracker_threshold_high_s", tracker_threshold_high_s},
            {"tracker_threshold_medium_s", tracker_threshold_medium_s},
            {"level_power_high", level_power_high},
            {"level_power_medium", level_power_medium},
            {"level_power_low", level_power_low},
            {"checkpoint_margin_factor", checkpoint_margin_factor}};
  return j.dump(2);
}

DeviceProfile DeviceProfile::from_json_text(const std::string& text) {
  json j = json::parse(text);
  DeviceProfile d;
  auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("capacitance", d.capacitance);
  get("v_on", d.v_on);
  get("v_off", d.v_off);
  get("active_power", d.active_power);
  get("t_mac", d.t_mac);
  get("layer_overhead_s", d.layer_overhead_s);
  get("checkpoint_time", d.checkpoint_time);
  get("checkpoint_energy", d.checkpoint_energy);
  get("restore_time", d.restore_time);
  get("restore_energy", d.restore_energy);
  get("write_time_per_weight", d.write_time_per_weight);
  get("write_energy_per_weight", d.write_energy_per_weight);
  get("extract_time_per_weight", d.extract_time_per_weight);
  get("extract_energy_per_weight", d.extract_energy_per_weight);
  get("lea_regular_mult", d.lea_regular_mult);
  get("lea_irregular_mult", d.lea_irregular_mult);
  get("tracker_threshold_high_s", d.tracker_threshold_high_s);
  get("tracker_threshold_medium_s", d.tracker_threshold_medium_s);
  get("level_power_high", d.level_power_high);
  get("level_power_medium", d.level_power_medium);
  get("level_power_low", d.level_power_low);
  get("checkpoint_margin_factor", d.checkpoint_margin_factor);
  if (d.v_on <= d.v_off)
    throw std::runtime_error("device profile: v_on must exceed v_off");
  if (d.tracker_threshold_high_s <= 0 || d.tracker_threshold_medium_s <= 0)
    calibrate_tracker_thresholds(d);
  return d;
}

DeviceProfile DeviceProfile::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open device profile: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

double PowerTrace::power_at(double t) const {
  if (steps.empty()) return 0;
  double p = steps.front().second;
  for (const auto& [ts, watts] : steps) {
    if (ts > t) break;
    p = watts;
  }
  return p;
}

double PowerTrace::next_boundary_after(double t) const {
  for (const auto& [ts, watts] : steps)
    if (ts > t) return ts;
  return std::numeric_limits<double>::infinity();
}

PowerTrace PowerTrace::constant(double watts) {
  PowerTrace tr;
  tr.steps = {{0.0, watts}};
  return tr;
}

std::string PowerTrace::to_csv() const {
  std::ostringstream out;
  out << "t_start_s,power_w\n";
  out.precision(12);
  for (const auto& [t, p] : steps) out << t << ',' << p << '\n';
  return out.str();
}

PowerTrace PowerTrace::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  PowerTrace tr;
  bool header = true;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) { header = false; continue; }
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("power trace csv: malformed row");
    double t = std::stod(line.substr(0, comma));
    double p = std::stod(line.substr(comma + 1));
    if (t <= prev_t) throw std::runtime_error("power trace csv: times must increase");
    if (p < 0) throw std::runtime_error("power trace csv: negative power");
    prev_t = t;
    tr.steps.emplace_back(t, p);
  }
  if (tr.steps.empty()) throw std::runtime_error("power trace csv: empty trace");
  return tr;
}

PowerTrace PowerTrace::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open power trace: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

std::string level_name(EnergyLevel level) {
  switch (level) {
    case EnergyLevel::High: return "high";
    case EnergyLevel::Medium: return "medium";
    case EnergyLevel::Low: return "low";
  }
  return "?";
}

void energy_tracker_update(EnergyState& state, double cycle_duration,
                           const DeviceProfile& device) {
  if (cycle_duration <= 0)
    throw std::runtime_error("energy_tracker_update: duration must be > 0");
  state.cycle_history.push_back(cycle_duration);
  while (state.cycle_history.size() > 3) state.cycle_history.pop_front();
  double mean = 0;
  for (double d : state.cycle_history) mean += d;
  mean /= static_cast<double>(state.cycle_history.size());
  if (mean <= device.tracker_threshold_high_s)
    state.level = EnergyLevel::High;
  else if (mean <= device.tracker_threshold_medium_s)
    state.level = EnergyLevel::Medium;
  else
    state.level = EnergyLevel::Low;
}

int adaptive_select(EnergyLevel level, int num_models) {
  if (num_models < 1) throw std::runtime_error("adaptive_select: empty bundle");
  int rank;  // 0 = low energy ... 2 = high energy
  switch (level) {
    case EnergyLevel::Low: rank = 0; break;
    case EnergyLevel::Medium: rank = 1; break;
    default: rank = 2; break;
  }
  return static_cast<int>(
      std::lround(static_cast<double>(rank) / 2.0 * (num_models - 1)));
}

std::string events_to_csv(const std::vector<SimEvent>& events) {
  std::ostringstream out;
  out << "t_s,event,detail\n";
  out.precision(12);
  for (const auto& e : events) out << e.t << ',' << e.kind << ',' << e.detail << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// simulation engine

namespace {

struct Engine {
  const DeviceProfile& dev;
  const PowerTrace& trace;
  double horizon;
  double t = 0;
  double energy = 0;
  bool powered = false;
  double last_on_time = -1;
  EnergyState tracker;
  std::vector<SimEvent>* log = nullptr;
  double consumed = 0;
  int checkpoints = 0;
  int power_ons = 0;

  Engine(const DeviceProfile& d, const PowerTrace& tr, double hz)
      : dev(d), trace(tr), horizon(hz) {}

  void event(const std::string& kind, const std::string& detail = "") {
    if (log) log->push_back({t, kind, detail});
  }

  void check_horizon() const {
    if (t > horizon)
      throw std::runtime_error("simulation horizon exceeded at t=" +
                               std::to_string(t));
  }

  double harvest_integral(double from, double to) const {
    double acc = 0, cur = from;
    while (cur < to) {
      double p = trace.power_at(cur);
      double b = std::min(to, trace.next_boundary_after(cur));
      acc += p * (b - cur);
      cur = b;
    }
    return acc;
  }

  // off-state charging to a target energy; exact segment-wise times
  void charge_to(double target) {
    target = std::min(target, dev.energy_on());
    while (energy < target) {
      double p = trace.power_at(t);
      double b = trace.next_boundary_after(t);
      if (p <= 0) {
        if (!std::isfinite(b))
          throw std::runtime_error(
              "simulation horizon exceeded: no harvest power remaining at t=" +
              std::to_string(t));
        t = b;
      } else {
        double dt_need = (target - energy) / p;
        if (!std::isfinite(b) || t + dt_need <= b) {
          t += dt_need;
          energy = target;
        } else {
          energy += p * (b - t);
          t = b;
        }
      }
      check_horizon();
    }
  }

  void power_on() {
    powered = true;
    ++power_ons;
    if (last_on_time >= 0)
      energy_tracker_update(tracker, t - last_on_time, dev);
    last_on_time = t;
    event("power_on");
  }

  void power_off() {
    powered = false;
    event("power_off");
  }

  void ensure_powered() {
    if (!powered) {
      charge_to(dev.energy_on());
      power_on();
    }
  }

  // powered operation of known duration and total energy cost
  void busy(double duration, double cost) {
    energy += harvest_integral(t, t + duration) - cost;
    consumed += cost;
    energy = std::clamp(energy, 0.0, dev.energy_on());
    t += duration;
    check_horizon();
  }

  void checkpoint_cycle() {
    busy(dev.checkpoint_time, dev.checkpoint_energy);
    ++checkpoints;
    event("checkpoint");
    power_off();
    charge_to(dev.energy_on());
    power_on();
    busy(dev.restore_time, dev.restore_energy);
    event("restore");
  }

  // run an op, checkpointing first whenever the projected buffer would sink
  // into the power-off margin
  void do_op(double duration, double cost) {
    ensure_powered();
    double margin =
        dev.energy_off() + dev.checkpoint_margin_factor * dev.checkpoint_energy;
    double projected =
        energy + trace.power_at(t) * duration - cost;
    if (projected < margin && energy < dev.energy_on() - 1e-15)
      checkpoint_cycle();
    busy(duration, cost);
  }
};

// per-output-element compute times for one model of the bundle
struct ModelCost {
  std::vector<std::vector<double>> element_times;  // [layer][element]
  double total() const {
    double acc = 0;
    for (const auto& l : element_times)
      for (double v : l) acc += v;
    return acc;
  }
};

ModelCost model_cost(const SwmBundle& bundle, int model_index,
                     const DeviceProfile& dev) {
  NetworkDef def = bundle.network_def();
  auto shapes = def.activation_shapes();
  ModelCost cost;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    const auto& s = shapes[li];
    const SwmLayer& layer = bundle.layers[li];
    std::vector<double> times;
    if (const auto* c = std::get_if<ConvLayer>(&layer.def)) {
      int oh = (s[1] - c->kh) / c->stride + 1, ow = (s[2] - c->kw) / c->stride + 1;
      for (int oc = 0; oc < c->out_ch; ++oc) {
        long macs = 0;
        for (int ic = 0; ic < c->in_ch; ++ic)
          macs += layer
                      .patterns[layer.location[static_cast<size_t>(oc * c->in_ch + ic)]
                                              [static_cast<size_t>(model_index)]]
                      .popcount();
        double per_elem = static_cast<double>(macs) * dev.t_mac;
        for (int e = 0; e < oh * ow; ++e) times.push_back(per_elem);
      }
    } else if (const auto* p = std::get_if<PoolLayer>(&layer.def)) {
      int oh = s[1] / p->size, ow = s[2] / p->size;
      double per_elem = static_cast<double>(p->size * p->size) * dev.t_mac;
      times.assign(static_cast<size_t>(s[0]) * oh * ow, per_elem);
    } else {
      const auto& f = std::get<FcLayer>(layer.def);
      int nbx = f.m / f.block_x, nby = f.n / f.block_y;
      for (int j = 0; j < f.n; ++j) {
        int bj = j / f.block_y, py = j % f.block_y;
        long macs = 0;
        for (int bi = 0; bi < nbx; ++bi) {
          const Pattern& pat =
              layer.patterns[layer.location[static_cast<size_t>(bi * nby + bj)]
                                           [static_cast<size_t>(model_index)]];
          for (int px = 0; px < f.block_x; ++px)
            if (pat.bit(px, py)) ++macs;
        }
        times.push_back(static_cast<double>(macs) * dev.t_mac);
      }
    }
    cost.element_times.push_back(std::move(times));
  }
  return cost;
}

long extraction_position_count(const SwmBundle& bundle) {
  long positions = 0;
  for (const auto& layer : bundle.layers)
    for (size_t k = 0; k < layer.location.size(); ++k)
      positions += bundle.union_pattern(layer, k).popcount();
  return positions;
}

// condensed inference with per-element energy accounting; arithmetic is
// identical to condensed_forward, so interruptions never change the scores
Tensor run_model(Engine& eng, const SwmBundle& bundle, int model_index,
                 const Tensor& input, const DeviceProfile& dev,
                 bool pay_extraction, RunReport& report) {
  auto condensed = extract_model(bundle, model_index);
  ModelCost cost = model_cost(bundle, model_index, dev);
  NetworkDef def = bundle.network_def();
  auto shapes = def.activation_shapes();
  {
    const auto& s0 = shapes[0];
    if (static_cast<long>(input.data.size()) !=
        static_cast<long>(s0[0]) * s0[1] * s0[2])
      throw std::runtime_error("run_inference: input shape mismatch");
  }

  double t_start = eng.t;
  double consumed_start = eng.consumed;
  int ckpt_start = eng.checkpoints;
  int on_start = eng.power_ons;
  bool powered_at_entry = eng.powered;

  eng.ensure_powered();
  eng.event("inference_start", "model=" + std::to_string(model_index));
  if (pay_extraction) {
    long positions = extraction_position_count(bundle);
    eng.do_op(static_cast<double>(positions) * dev.extract_time_per_weight,
              static_cast<double>(positions) * dev.extract_energy_per_weight);
    eng.event("extract", "positions=" + std::to_string(positions));
  }

  Tensor act = input;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    const auto& s = shapes[li];
    const SwmLayer& layer = bundle.layers[li];
    const auto& times = cost.element_times[li];
    eng.do_op(dev.layer_overhead_s, dev.layer_overhead_s * dev.active_power);
    size_t elem = 0;
    auto pay = [&]() {
      double dt = times[elem++];
      if (dt > 0) eng.do_op(dt, dt * dev.active_power);
    };
    if (const auto* c = std::get_if<ConvLayer>(&layer.def)) {
      int h = s[1], wd = s[2];
      int oh = (h - c->kh) / c->stride + 1, ow = (wd - c->kw) / c->stride + 1;
      Tensor out({c->out_ch, oh, ow});
      const auto& bias = layer.biases[static_cast<size_t>(model_index)];
      for (int oc = 0; oc < c->out_ch; ++oc)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            pay();
            double acc = bias[static_cast<size_t>(oc)];
            for (int ic = 0; ic < c->in_ch; ++ic) {
              const CondensedKernel& ck =
                  condensed[li][static_cast<size_t>(oc * c->in_ch + ic)];
              size_t vi = 0;
              for (int ky = 0; ky < c->kh; ++ky)
                for (int kx = 0; kx < c->kw; ++kx)
                  if (ck.pattern.bits[static_cast<size_t>(ky * c->kw + kx)])
                    acc += static_cast<double>(
                               act[(static_cast<size_t>(ic) * h + oy * c->stride + ky) *
                                       wd + ox * c->stride + kx]) *
                           ck.values[vi++];
            }
            float v = static_cast<float>(acc);
            if (c->act == Activation::Relu && v < 0.0f) v = 0.0f;
            out[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = v;
          }
      act = std::move(out);
    } else if (const auto* p = std::get_if<PoolLayer>(&layer.def)) {
      int ch = s[0], h = s[1], wd = s[2], k = p->size;
      int oh = h / k, ow = wd / k;
      Tensor out({ch, oh, ow});
      for (int cI = 0; cI < ch; ++cI)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            pay();
            if (p->kind == PoolLayer::Kind::Max) {
              float best = -std::numeric_limits<float>::infinity();
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  best = std::max(best,
                                  act[(static_cast<size_t>(cI) * h + oy * k + dy) * wd +
                                      ox * k + dx]);
              out[(static_cast<size_t>(cI) * oh + oy) * ow + ox] = best;
            } else {
              double acc = 0;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  acc += act[(static_cast<size_t>(cI) * h + oy * k + dy) * wd +
                             ox * k + dx];
              out[(static_cast<size_t>(cI) * oh + oy) * ow + ox] =
                  static_cast<float>(acc / (k * k));
            }
          }
      act = std::move(out);
    } else {
      const auto& f = std::get<FcLayer>(layer.def);
      const auto& bias = layer.biases[static_cast<size_t>(model_index)];
      int nbx = f.m / f.block_x, nby = f.n / f.block_y;
      Tensor out({f.n, 1, 1});
      for (int j = 0; j < f.n; ++j) {
        pay();
        int bj = j / f.block_y, py = j % f.block_y;
        double acc = bias[static_cast<size_t>(j)];
        for (int bi = 0; bi < nbx; ++bi) {
          const CondensedKernel& ck =
              condensed[li][static_cast<size_t>(bi * nby + bj)];
          // count values preceding column py within this block's pattern
          size_t vi = 0;
          for (int px = 0; px < f.block_x; ++px)
            for (int qy = 0; qy < f.block_y; ++qy) {
              if (!ck.pattern.bit(px, qy)) continue;
              if (qy == py)
                acc += static_cast<double>(act[static_cast<size_t>(bi * f.block_x + px)]) *
                       ck.values[vi];
              ++vi;
            }
        }
        float v = static_cast<float>(acc);
        if (f.act == Activation::Relu && v < 0.0f) v = 0.0f;
        out[static_cast<size_t>(j)] = v;
      }
      act = std::move(out);
    }
  }
  eng.event("inference_done", "model=" + std::to_string(model_index));

  report.model_index = model_index;
  report.start_time = t_start;
  report.completion_time = eng.t - t_start;
  report.checkpoints = eng.checkpoints - ckpt_start;
  report.power_cycles = (eng.power_ons - on_start) + (powered_at_entry ? 1 : 0);
  report.energy_consumed = eng.consumed - consumed_start;
  return act;
}

}  // namespace

std::vector<SimEvent> simulate_power(const DeviceProfile& device,
                                     const PowerTrace& trace,
                                     const PowerTrace& load_schedule,
                                     double horizon, double initial_energy) {
  std::vector<SimEvent> events;
  double t = 0;
  double energy = std::clamp(initial_energy, 0.0, device.energy_on());
  bool powered = energy >= device.energy_on();
  const double e_on = device.energy_on(), e_off = device.energy_off();
  bool any_harvest_possible = false;
  for (const auto& [ts, p] : trace.steps)
    if (p > 0) any_harvest_possible = true;
  if (!any_harvest_possible && energy <= 0 && !powered)
    throw std::runtime_error("simulate_power: horizon exceeded, no harvest and empty buffer");

  while (t < horizon) {
    double harvest = trace.power_at(t);
    double load = powered ? load_schedule.power_at(t) : 0.0;
    double net = harvest - load;
    double boundary = std::min({horizon, trace.next_boundary_after(t),
                                load_schedule.next_boundary_after(t)});
    double target = powered ? e_off : e_on;
    bool toward_target = powered ? net < 0 : net > 0;
    if (toward_target) {
      double dt_need = (target - energy) / net;  // both signs cancel
      if (t + dt_need <= boundary) {
        t += dt_need;
        energy = target;
        if (powered) {
          powered = false;
          events.push_back({t, "power_off", ""});
        } else {
          powered = true;
          events.push_back({t, "power_on", ""});
        }
        continue;
      }
    }
    // no event before the boundary
    energy = std::clamp(energy + net * (boundary - t), 0.0, e_on);
    if (boundary >= horizon) break;
    if (boundary <= t)
      throw std::runtime_error("simulate_power: stalled at t=" + std::to_string(t));
    t = boundary;
  }
  return events;
}

std::string RunReport::csv_header() {
  return "inference,start_time_s,completion_time_s,power_cycles,checkpoints,"
         "model_index,energy_consumed_j,weights_rewritten";
}

std::string RunReport::to_csv_row(int inference_index) const {
  std::ostringstream out;
  out.precision(12);
  out << inference_index << ',' << start_time << ',' << completion_time << ','
      << power_cycles << ',' << checkpoints << ',' << model_index << ','
      << energy_consumed << ',' << weights_rewritten;
  return out.str();
}

std::pair<Tensor, RunReport> run_inference_intermittent(
    const SwmBundle& bundle, int model_index, const Tensor& input,
    const DeviceProfile& device, const PowerTrace& trace,
    const IntermittentOptions& opts, std::vector<SimEvent>* events) {
  if (model_index < 0 || model_index >= bundle.num_models)
    throw std::out_of_range("run_inference_intermittent: model index out of range");
  Engine eng(device, trace, opts.max_horizon);
  eng.t = opts.start_time;
  eng.energy = std::clamp(opts.initial_energy, 0.0, device.energy_on());
  eng.log = events;
  RunReport report;
  Tensor scores = run_model(eng, bundle, model_index, input, device,
                            opts.pay_extraction, report);
  return {std::move(scores), report};
}

long bundle_model_weight_count(const SwmBundle& bundle, int model_index) {
  if (model_index < 0 || model_index >= bundle.num_models)
    throw std::out_of_range("model index out of range");
  long count = 0;
  for (const auto& layer : bundle.layers)
    for (const auto& loc : layer.location)
      count += layer.patterns[loc[static_cast<size_t>(model_index)]].popcount();
  return count;
}

long bundle_switch_write_count(const SwmBundle& bundle, int from, int to,
                               bool shared) {
  if (!shared) return bundle_model_weight_count(bundle, to);
  long count = 0;
  for (const auto& layer : bundle.layers)
    for (const auto& loc : layer.location) {
      const Pattern& pf = layer.patterns[loc[static_cast<size_t>(from)]];
      const Pattern& pt = layer.patterns[loc[static_cast<size_t>(to)]];
      for (size_t i = 0; i < pt.bits.size(); ++i)
        if (pt.bits[i] && !pf.bits[i]) ++count;
    }
  return count;
}

std::vector<RunReport> run_adaptive(const SwmBundle& bundle,
                                    const std::vector<Tensor>& inputs,
                                    const DeviceProfile& device,
                                    const PowerTrace& trace,
                                    const AdaptiveOptions& opts,
                                    std::vector<SimEvent>* events) {
  if (inputs.empty()) throw std::runtime_error("run_adaptive: no inputs");
  Engine eng(device, trace, opts.max_horizon);
  eng.t = opts.start_time;
  eng.energy = std::clamp(opts.initial_energy, 0.0, device.energy_on());
  eng.log = events;

  std::vector<RunReport> reports;
  int current = -1;
  for (const auto& input : inputs) {
    int target = opts.adaptive
                     ? adaptive_select(eng.tracker.level, bundle.num_models)
                     : opts.fixed_model;
    long writes = 0;
    bool switched = current != target;
    if (switched) {
      writes = current < 0 ? bundle_model_weight_count(bundle, target)
                           : bundle_switch_write_count(bundle, current, target,
                                                       opts.shared_switching);
      eng.ensure_powered();
      if (writes > 0)
        eng.do_op(static_cast<double>(writes) * device.write_time_per_weight,
                  static_cast<double>(writes) * device.write_energy_per_weight);
      eng.event("switch", "from=" + std::to_string(current) +
                              ",to=" + std::to_string(target) +
                              ",writes=" + std::to_string(writes));
      current = target;
    }
    RunReport report;
    run_model(eng, bundle, current, input, device, switched, report);
    report.weights_rewritten = writes;
    reports.push_back(report);
  }
  return reports;
}

double uninterrupted_inference_time(const SwmBundle& bundle, int model_index,
                                    const DeviceProfile& device) {
  ModelCost cost = model_cost(bundle, model_index, device);
  return cost.total() +
         static_cast<double>(bundle.layers.size()) * device.layer_overhead_s;
}

double measure_extraction_overhead(const SwmBundle& bundle,
                                   const DeviceProfile& device) {
  long positions = extraction_position_count(bundle);
  double extract_time =
      static_cast<double>(positions) * device.extract_time_per_weight;
  double acc = 0;
  for (int m = 0; m < bundle.num_models; ++m)
    acc += extract_time / uninterrupted_inference_time(bundle, m, device);
  return acc / static_cast<double>(bundle.num_models);
}

std::vector<CalibrationSample> generate_default_calibration(
    const DeviceProfile& device, uint64_t seed, int samples_per_group) {
  std::mt19937_64 rng(seed);
  std::vector<CalibrationSample> samples;
  const ComputeMode modes[] = {ComputeMode::Cpu, ComputeMode::LeaRegular,
                               ComputeMode::LeaIrregular};
  const LayerKind kinds[] = {LayerKind::Conv, LayerKind::Fc, LayerKind::Pool};
  std::uniform_int_distribution<int> ch(1, 8), img(8, 20), fc_dim(8, 128);
  std::uniform_int_distribution<int> kdim(0, 1), sp(0, 8);
  for (ComputeMode mode : modes)
    for (LayerKind kind : kinds)
      for (int i = 0; i < samples_per_group; ++i) {
        CalibrationSample s;
        s.mode = mode;
        s.kind = kind;
        if (kind == LayerKind::Conv) {
          s.in_ch = ch(rng);
          s.out_ch = ch(rng);
          s.kh = s.kw = kdim(rng) ? 5 : 3;
          s.input_h = s.input_w = std::max(img(rng), s.kh + 1);
          s.sparsity = static_cast<double>(sp(rng)) / 10.0;
        } else if (kind == LayerKind::Fc) {
          s.in_ch = fc_dim(rng);   // m
          s.out_ch = fc_dim(rng);  // n
          s.kh = s.kw = 1;
          s.input_h = s.input_w = 1;
          s.sparsity = static_cast<double>(sp(rng)) / 10.0;
        } else {
          s.in_ch = ch(rng);
          s.kh = s.kw = 2;  // pool window
          int half = img(rng) / 2;
          s.input_h = s.input_w = 2 * std::max(2, half);
          s.sparsity = 0.0;
        }
        s.latency_s = device.mode_mult(mode) * device.t_mac *
                          (1.0 - s.sparsity) * static_cast<double>(s.macs()) +
                      device.layer_overhead_s;
        samples.push_back(s);
      }
  return samples;
}

}  // namespace eve
