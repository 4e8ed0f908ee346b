#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "eve/latency.hpp"
#include "eve/swm.hpp"

namespace eve {

/// Capacitor-buffered energy-harvesting device model. Energy thresholds are
/// 0.5*C*V^2 at the turn-on/turn-off voltages; the buffer never exceeds the
/// turn-on energy.
struct DeviceProfile {
  double capacitance = 100e-6;  // farads
  double v_on = 3.3;            // volts, power-on threshold (operating voltage)
  double v_off = 1.8;           // volts, power-off threshold
  double active_power = 12e-3;  // watts while computing
  double t_mac = 2.5e-6;        // seconds per MAC on the cpu path
  double layer_overhead_s = 1e-4;

  double checkpoint_time = 1e-3, checkpoint_energy = 8e-6;
  double restore_time = 1e-3, restore_energy = 8e-6;
  double write_time_per_weight = 2e-6, write_energy_per_weight = 2.4e-8;
  double extract_time_per_weight = 2.5e-7, extract_energy_per_weight = 3e-9;

  // relative speed of the vector unit vs the cpu path
  double lea_regular_mult = 0.35;
  double lea_irregular_mult = 0.55;

  // energyTracker bands over the mean of the last three cycle durations;
  // <= 0 means "derive from the reference harvest levels at load time"
  double tracker_threshold_high_s = 0;
  double tracker_threshold_medium_s = 0;
  // reference harvest levels the default thresholds are calibrated against
  double level_power_high = 5e-3, level_power_medium = 4e-3, level_power_low = 3e-3;

  double checkpoint_margin_factor = 1.5;

  double energy_on() const { return 0.5 * capacitance * v_on * v_on; }
  double energy_off() const { return 0.5 * capacitance * v_off * v_off; }
  double mode_mult(ComputeMode mode) const;

  std::string to_json_text() const;
  static DeviceProfile from_json_text(const std::string& text);
  static DeviceProfile from_json_file(const std::string& path);
};

/// Fills the tracker thresholds with midpoints between the analytic cycle
/// times at the profile's three reference harvest levels.
void calibrate_tracker_thresholds(DeviceProfile& device);

/// Analytic steady-state power-cycle duration at constant harvest power.
double expected_cycle_duration(const DeviceProfile& device, double harvest_w);

/// Piecewise-constant harvested power: (t_start, watts) steps, last step
/// extends forever.
struct PowerTrace {
  std::vector<std::pair<double, double>> steps;

  double power_at(double t) const;
  double next_boundary_after(double t) const;  // +inf when none
  static PowerTrace constant(double watts);

  std::string to_csv() const;  // t_start_s,power_w
  static PowerTrace from_csv(const std::string& text);
  static PowerTrace from_csv_file(const std::string& path);
};

enum class EnergyLevel { High, Medium, Low };
std::string level_name(EnergyLevel level);

struct EnergyState {
  double buffer_energy = 0;
  bool powered = false;
  std::deque<double> cycle_history;  // up to 3 completed cycle durations
  EnergyLevel level = EnergyLevel::High;  // cold-start default
};

/// Push a completed power-cycle duration and reclassify from the mean of
/// the last (up to) three durations.
void energy_tracker_update(EnergyState& state, double cycle_duration,
                           const DeviceProfile& device);

/// Low energy -> model 0 (highest sparsity); high -> model N-1; monotone in
/// between.
int adaptive_select(EnergyLevel level, int num_models);

struct SimEvent {
  double t = 0;
  std::string kind;
  std::string detail;
};

std::string events_to_csv(const std::vector<SimEvent>& events);

/// Charge/discharge integration under a load schedule (same step format as
/// the trace). Emits power_on/power_off events with closed-form times.
std::vector<SimEvent> simulate_power(const DeviceProfile& device,
                                     const PowerTrace& trace,
                                     const PowerTrace& load_schedule,
                                     double horizon,
                                     double initial_energy = 0);

struct RunReport {
  double start_time = 0;
  double completion_time = 0;  // wall-clock duration of this inference
  int power_cycles = 0;
  int checkpoints = 0;
  int model_index = 0;
  double energy_consumed = 0;
  long weights_rewritten = 0;

  static std::string csv_header();
  std::string to_csv_row(int inference_index) const;
};

struct IntermittentOptions {
  double start_time = 0;
  double initial_energy = 0;
  double max_horizon = 1e7;
  bool pay_extraction = true;
};

/// One inference under intermittent power with index-based checkpointing.
/// Scores are identical to the uninterrupted condensed forward pass.
std::pair<Tensor, RunReport> run_inference_intermittent(
    const SwmBundle& bundle, int model_index, const Tensor& input,
    const DeviceProfile& device, const PowerTrace& trace,
    const IntermittentOptions& opts = {}, std::vector<SimEvent>* events = nullptr);

struct AdaptiveOptions {
  bool adaptive = true;
  int fixed_model = 0;             // used when adaptive == false
  bool shared_switching = true;    // false: every switch rewrites the full model
  double start_time = 0;
  double initial_energy = 0;
  double max_horizon = 1e7;
};

/// Workload of inferences with energyTracker-driven model selection and
/// partial-weight switching. Model switches happen only between inferences.
std::vector<RunReport> run_adaptive(const SwmBundle& bundle,
                                    const std::vector<Tensor>& inputs,
                                    const DeviceProfile& device,
                                    const PowerTrace& trace,
                                    const AdaptiveOptions& opts = {},
                                    std::vector<SimEvent>* events = nullptr);

/// Weights that change when switching the resident model: kept(to) minus
/// kept(from) over every kernel's patterns (full |kept(to)| when sharing is
/// disabled).
long bundle_switch_write_count(const SwmBundle& bundle, int from, int to,
                               bool shared);
long bundle_model_weight_count(const SwmBundle& bundle, int model_index);

/// Mean over models of extraction time / uninterrupted inference time.
double measure_extraction_overhead(const SwmBundle& bundle,
                                   const DeviceProfile& device);

/// Uninterrupted compute time of one model on the device (the simulator's
/// own cost model; also the source of the default latency calibration).
double uninterrupted_inference_time(const SwmBundle& bundle, int model_index,
                                    const DeviceProfile& device);

/// Calibration samples generated from the device cost model across random
/// layer shapes and sparsities, for all (mode, layer kind) pairs.
std::vector<CalibrationSample> generate_default_calibration(
    const DeviceProfile& device, uint64_t seed, int samples_per_group = 24);

}  // namespace eve
