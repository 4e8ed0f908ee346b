// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Every tolerance and bound is pinned in this file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eve/controller.hpp"
#include "eve/latency.hpp"
#include "eve/nn.hpp"
#include "eve/patterns.hpp"
#include "eve/runtime.hpp"
#include "eve/shared_training.hpp"
#include "eve/swm.hpp"

using namespace eve;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok, double seconds,
            const std::string& detail) {
  std::printf("[%s] %02d %s (%.2f s)%s%s\n", ok ? "PASS" : "FAIL", index,
              name.c_str(), seconds, detail.empty() ? "" : " — ",
              detail.c_str());
  if (!ok) ++g_failures;
}

template <typename Fn>
void criterion(int index, const std::string& name, double time_budget_s, Fn fn) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
  if (ok && secs > time_budget_s) {
    ok = false;
    detail = "exceeded time budget of " + std::to_string(time_budget_s) + " s";
  }
  report(index, name, ok, secs, detail);
}

// ---------------------------------------------------------------------------
// shared fixtures and helpers

Pattern make_pattern(int x, int y, std::vector<uint8_t> bits, int id) {
  return Pattern(x, y, std::move(bits), id);
}

Pattern random_pattern(int x, int y, std::mt19937_64& rng) {
  std::vector<uint8_t> bits(static_cast<size_t>(x * y));
  std::bernoulli_distribution coin(0.5);
  for (auto& b : bits) b = coin(rng) ? 1 : 0;
  auto [cr, cc] = Pattern::center(x, y);
  bits[static_cast<size_t>(cr * y + cc)] = 1;
  return Pattern(x, y, std::move(bits), -1);
}

PatternLibrary random_library(int x, int y, int count, std::mt19937_64& rng) {
  PatternLibrary lib;
  lib.x = x;
  lib.y = y;
  std::set<std::vector<uint8_t>> seen;
  while (lib.size() < count) {
    Pattern p = random_pattern(x, y, rng);
    if (!seen.insert(p.bits).second) continue;
    p.id = lib.size();
    lib.patterns.push_back(std::move(p));
  }
  return lib;
}

// Library of nested 3x3 patterns with the given kept counts (each a subset of
// the next), all containing the center bit.
PatternLibrary chain_library(const std::vector<int>& kept_counts) {
  // fill order: center first, then corners, then edges
  const int order[9] = {4, 0, 8, 2, 6, 1, 3, 5, 7};
  PatternLibrary lib;
  lib.x = 3;
  lib.y = 3;
  for (size_t i = 0; i < kept_counts.size(); ++i) {
    std::vector<uint8_t> bits(9, 0);
    for (int k = 0; k < kept_counts[i]; ++k) bits[static_cast<size_t>(order[k])] = 1;
    lib.patterns.push_back(make_pattern(3, 3, bits, static_cast<int>(i)));
  }
  return lib;
}

NetworkDef toy_network() {
  NetworkDef def;
  def.input_ch = 1;
  def.input_h = kImageSize;
  def.input_w = kImageSize;
  def.layers = {ConvLayer{1, 4, 3, 3, 1, Activation::Relu},
                PoolLayer{PoolLayer::Kind::Max, 2},
                FcLayer{36, 9, 3, 3, Activation::None}};
  return def;
}

// Synthetic multi-model fixture that shares by construction: every model is
// the same master weight set under its own mask, so shared positions agree
// bit-exactly without training.
struct MasterBundle {
  NetworkDef def;
  PatternLibrary library;
  std::vector<ModelAssignment> assignments;
  std::vector<TrainedModel> models;
  SwmBundle bundle;
};

MasterBundle build_master_bundle(const NetworkDef& def,
                                 const PatternLibrary& library,
                                 const std::vector<ModelAssignment>& assignments,
                                 uint64_t seed) {
  MasterBundle mb;
  mb.def = def;
  mb.library = library;
  mb.assignments = assignments;
  TrainedModel master = init_model(def, seed);
  for (const ModelAssignment& a : assignments) {
    auto [weights, masks] = apply_mask(master.weights, def, a, library);
    TrainedModel m;
    m.def = def;
    m.weights = std::move(weights);
    m.biases = master.biases;
    m.masks = std::move(masks);
    mb.models.push_back(std::move(m));
  }
  mb.bundle = compress(mb.models, mb.assignments, mb.library);
  return mb;
}

std::vector<ModelAssignment> random_assignments(const NetworkDef& def,
                                                const PatternLibrary& library,
                                                int num_models,
                                                std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, library.size() - 1);
  std::vector<ModelAssignment> out;
  for (int m = 0; m < num_models; ++m) {
    ModelAssignment a;
    for (const LayerDef& layer : def.layers) {
      std::vector<int> ids;
      if (layer_prunable(layer))
        for (int k = 0; k < kernel_count(layer); ++k) ids.push_back(pick(rng));
      a.kernel_patterns.push_back(std::move(ids));
    }
    out.push_back(std::move(a));
  }
  return out;
}

// Independent extraction oracle: enumerate positions, map each kept desired
// position to its slot among union-covered positions.
std::vector<float> oracle_extract(const std::vector<float>& payload,
                                  const Pattern& desired,
                                  const std::vector<Pattern>& others) {
  std::vector<float> out;
  int slot = 0;
  for (int r = 0; r < desired.x; ++r)
    for (int c = 0; c < desired.y; ++c) {
      bool covered = desired.bit(r, c);
      for (const Pattern& o : others) covered = covered || o.bit(r, c);
      if (desired.bit(r, c)) out.push_back(payload[static_cast<size_t>(slot)]);
      if (covered) ++slot;
    }
  return out;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

// Trained three-model fixture used by the execution, trend, and speedup
// criteria: nested diagonal / X / dense patterns on the toy network.
struct TrainedFixture {
  NetworkDef def;
  PatternLibrary library;
  std::vector<ModelAssignment> assignments;
  MaskSchedule schedule;
  std::vector<TrainedModel> models;
  SharedTrainingReport train_report;
  SwmBundle bundle;
};

TrainedFixture& trained_fixture() {
  static TrainedFixture* fx = [] {
    auto* f = new TrainedFixture;
    f->def = toy_network();
    f->library.x = 3;
    f->library.y = 3;
    f->library.patterns = {
        make_pattern(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, 0),   // diagonal
        make_pattern(3, 3, {1, 0, 1, 0, 1, 0, 1, 0, 1}, 1),   // X
        make_pattern(3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1}, 2)};  // dense
    for (int id : {0, 1, 2})
      f->assignments.push_back(ModelAssignment::uniform(f->def, id));
    f->schedule = build_mask_schedule(f->def, f->assignments, f->library);
    Dataset data = make_synthetic_dataset(8, 9, 32);
    TrainHyper hyper;  // defaults: 5 epochs, lr 0.25, batch 16, seed 1
    f->models = train_shared_sequence(f->schedule, data, hyper, &f->train_report);
    f->bundle = compress(f->models, f->assignments, f->library);
    return f;
  }();
  return *fx;
}

double total_elapsed(const std::vector<RunReport>& reports) {
  return reports.back().start_time + reports.back().completion_time;
}

DeviceProfile default_device() {
  DeviceProfile dev;
  calibrate_tracker_thresholds(dev);
  return dev;
}

std::vector<Tensor> random_inputs(const NetworkDef& def, int count,
                                  uint64_t seed) {
  auto shapes = def.activation_shapes();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<Tensor> inputs;
  for (int i = 0; i < count; ++i) {
    Tensor t({shapes[0][0], shapes[0][1], shapes[0][2]});
    for (auto& v : t.data) v = dist(rng);
    inputs.push_back(std::move(t));
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// criteria 1 & 3 share one randomized pack/unpack sweep

struct CodecSweep {
  int cases = 0;
  bool round_trip_ok = true;
  bool extract_ok = true;
  bool size_law_ok = true;
};

CodecSweep run_codec_sweep(int num_cases, uint64_t seed) {
  CodecSweep sweep;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_n(2, 5);
  std::uniform_int_distribution<int> pick_shape(0, 2);
  for (int cs = 0; cs < num_cases; ++cs) {
    int n_models = pick_n(rng);
    NetworkDef def;
    int kx = 3, ky = 3;
    switch (pick_shape(rng)) {
      case 0:  // 3x3 conv
        def.input_ch = 1; def.input_h = 4; def.input_w = 4;
        def.layers = {ConvLayer{1, 2, 3, 3, 1, Activation::None}};
        break;
      case 1:  // 5x5 conv
        kx = ky = 5;
        def.input_ch = 1; def.input_h = 6; def.input_w = 6;
        def.layers = {ConvLayer{1, 2, 5, 5, 1, Activation::None}};
        break;
      default:  // fc blocks
        def.input_ch = 1; def.input_h = 2; def.input_w = 3;
        def.layers = {FcLayer{6, 6, 3, 3, Activation::None}};
        break;
    }
    PatternLibrary lib = random_library(kx, ky, 6, rng);
    auto assignments = random_assignments(def, lib, n_models, rng);
    MasterBundle mb = build_master_bundle(def, lib, assignments, seed + cs);
    sweep.cases++;

    for (int m = 0; m < n_models; ++m) {
      TrainedModel rec = reconstruct_dense(mb.bundle, m);
      for (size_t li = 0; li < rec.weights.size(); ++li)
        if (!bit_equal(rec.weights[li].data, mb.models[m].weights[li].data))
          sweep.round_trip_ok = false;
    }

    for (const SwmLayer& layer : mb.bundle.layers) {
      if (layer.patterns.empty()) continue;
      for (size_t k = 0; k < layer.offsets.size(); ++k) {
        Pattern uni = mb.bundle.union_pattern(layer, k);
        size_t begin = layer.offsets[k];
        size_t end = (k + 1 < layer.offsets.size())
                         ? layer.offsets[k + 1]
                         : layer.payload.size();
        if (static_cast<int>(end - begin) != uni.popcount())
          sweep.size_law_ok = false;
        std::vector<float> segment(layer.payload.begin() + begin,
                                   layer.payload.begin() + end);
        for (int m = 0; m < n_models; ++m) {
          Pattern desired = layer.patterns[layer.location[k][m]];
          std::vector<Pattern> others;
          for (int o = 0; o < n_models; ++o)
            if (o != m) others.push_back(layer.patterns[layer.location[k][o]]);
          CondensedKernel ck = extract(segment, desired, others);
          if (!bit_equal(ck.values, oracle_extract(segment, desired, others)))
            sweep.extract_ok = false;
        }
      }
    }
  }
  return sweep;
}

CodecSweep& codec_sweep() {
  static CodecSweep sweep = run_codec_sweep(1000, 42);
  return sweep;
}

// ---------------------------------------------------------------------------

bool c1_codec_round_trip(std::string& detail) {
  const CodecSweep& s = codec_sweep();
  detail = std::to_string(s.cases) + " randomized cases";
  return s.cases >= 1000 && s.round_trip_ok && s.extract_ok;
}

bool c2_extraction_trace(std::string& detail) {
  // worked example: payload [10,11,13], desired 1001, other 1100 -> [10,13]
  Pattern desired = make_pattern(2, 2, {1, 0, 0, 1}, 0);
  std::vector<Pattern> others = {make_pattern(2, 2, {1, 1, 0, 0}, 1)};
  ExtractStats st;
  CondensedKernel ck = extract({10.0f, 11.0f, 13.0f}, desired, others, &st);
  if (!(ck.values == std::vector<float>{10.0f, 13.0f} && st.take == 2 &&
        st.skip == 1 && st.do_nothing == 1)) {
    detail = "worked example mismatch";
    return false;
  }

  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    Pattern d = random_pattern(3, 3, rng);
    std::vector<Pattern> os = {random_pattern(3, 3, rng),
                               random_pattern(3, 3, rng)};
    std::vector<Pattern> all = {d, os[0], os[1]};
    Pattern uni = union_patterns(all);
    std::vector<float> payload(static_cast<size_t>(uni.popcount()));
    std::uniform_real_distribution<float> val(-2.0f, 2.0f);
    for (auto& v : payload) v = val(rng);

    ExtractStats stats;
    CondensedKernel got = extract(payload, d, os, &stats);
    if (!bit_equal(got.values, oracle_extract(payload, d, os))) {
      detail = "randomized triple " + std::to_string(i) + " values mismatch";
      return false;
    }
    Pattern other_union = union_patterns(os);
    long expect_take = d.popcount();
    long expect_skip = 0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (!d.bit(r, c) && other_union.bit(r, c)) ++expect_skip;
    long expect_nothing = 9 - uni.popcount();
    if (stats.take != expect_take || stats.skip != expect_skip ||
        stats.do_nothing != expect_nothing) {
      detail = "randomized triple " + std::to_string(i) + " counts mismatch";
      return false;
    }
  }
  detail = "worked example + 100 randomized triples";
  return true;
}

bool c3_size_law(std::string& detail) {
  if (!codec_sweep().size_law_ok) {
    detail = "per-kernel payload size != union popcount";
    return false;
  }
  // nested chain: payload collapses to the densest pattern per kernel
  NetworkDef def;
  def.input_ch = 1; def.input_h = 4; def.input_w = 4;
  def.layers = {ConvLayer{1, 2, 3, 3, 1, Activation::None}};
  PatternLibrary lib = chain_library({3, 5, 9});
  std::vector<ModelAssignment> assignments;
  for (int id : {0, 1, 2}) assignments.push_back(ModelAssignment::uniform(def, id));
  MasterBundle mb = build_master_bundle(def, lib, assignments, 11);
  const SwmLayer& layer = mb.bundle.layers[0];
  long payload = static_cast<long>(layer.payload.size());
  long largest_only = 9L * kernel_count(def.layers[0]);
  detail = "chain payload " + std::to_string(payload) + " == " +
           std::to_string(largest_only) + " (densest model alone)";
  return payload == largest_only;
}

bool c4_condensed_execution(std::string& detail) {
  TrainedFixture& fx = trained_fixture();
  double worst = 0;
  for (const Tensor& input : random_inputs(fx.def, 100, 21)) {
    for (int m = 0; m < fx.bundle.num_models; ++m) {
      Tensor dense = forward(fx.models[static_cast<size_t>(m)], input);
      Tensor cond = condensed_forward(fx.bundle, m, input);
      for (int i = 0; i < dense.size(); ++i)
        worst = std::max(worst, std::fabs(static_cast<double>(
                                    dense[static_cast<size_t>(i)] -
                                    cond[static_cast<size_t>(i)])));
    }
  }
  std::ostringstream os;
  os << "100 inputs x 3 models, max |dense - condensed| = " << worst;
  detail = os.str();
  return worst <= 1e-5;
}

bool c5_shared_training(std::string& detail) {
  TrainedFixture& fx = trained_fixture();
  if (!verify_sharing(fx.models, fx.schedule)) {
    detail = "shared positions not bit-exact";
    return false;
  }
  const auto& reports = fx.train_report.models;
  std::ostringstream os;
  os << "sparsity/accuracy:";
  for (const auto& r : reports) os << " " << r.sparsity << "/" << r.accuracy;
  detail = os.str();
  for (size_t m = 0; m + 1 < reports.size(); ++m) {
    if (!(reports[m].sparsity > reports[m + 1].sparsity)) return false;
    // denser models may not lose more than 2 accuracy points to sparser ones
    if (reports[m].accuracy > reports[m + 1].accuracy + 0.02) return false;
  }
  return true;
}

bool c6_reward_cases(std::string& detail) {
  PatternLibrary lib = chain_library({2, 3, 4, 5, 7, 9});  // H,H,M,M,L,L
  RewardConfig cfg;
  cfg.latency_constraint = 1.0;
  cfg.accuracy_constraint = 0.8;
  cfg.phi_pattern = 1.5;
  cfg.phi_accuracy = 1.25;
  cfg.phi_latency = 0.75;

  struct ActionCase { std::vector<int> actions; bool valid; };
  std::vector<ActionCase> action_cases = {
      {{0, 2, 4}, true},    // distinct ids, distinct bands
      {{0, 0, 4}, false},   // duplicate id
      {{0, 1, 4}, false}};  // two picks in the same band
  int checked = 0;
  for (double latency : {0.5, 1.0, 1.3}) {
    for (double accuracy : {0.7, 0.8, 0.9}) {
      for (const ActionCase& ac : action_cases) {
        EpisodeEval eval{accuracy, latency};
        RewardCase rc;
        double got = compute_reward(eval, cfg, ac.actions, lib, &rc);
        double want;
        RewardCase want_case;
        if (!ac.valid) {
          want = -cfg.phi_pattern;
          want_case = RewardCase::PatternInvalid;
        } else if (latency >= cfg.latency_constraint) {
          want = -cfg.phi_latency;
          want_case = RewardCase::LatencyPenalty;
        } else if (accuracy <= cfg.accuracy_constraint) {
          want = -cfg.phi_accuracy;
          want_case = RewardCase::AccuracyPenalty;
        } else {
          want = accuracy + (cfg.latency_constraint - latency) /
                                cfg.latency_constraint;
          want_case = RewardCase::Satisfied;
        }
        if (got != want || rc != want_case) {
          std::ostringstream os;
          os << "A=" << accuracy << " L=" << latency
             << (ac.valid ? " valid" : " invalid") << ": got " << got
             << " want " << want;
          detail = os.str();
          return false;
        }
        ++checked;
      }
    }
  }
  detail = std::to_string(checked) + " grid cells exact";
  return true;
}

bool c7_policy_gradient(std::string& detail) {
  // finite-difference check over every parameter
  ControllerState state = ControllerState::init(5, 7);
  std::vector<int> actions = {0, 2, 4};
  std::vector<double> grad = weighted_log_prob_grad(state, actions);
  auto refs = state.param_refs();
  const double eps = 1e-6;
  double worst = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    double saved = *refs[i];
    *refs[i] = saved + eps;
    double up = weighted_log_prob(state, actions);
    *refs[i] = saved - eps;
    double down = weighted_log_prob(state, actions);
    *refs[i] = saved;
    double fd = (up - down) / (2 * eps);
    double rel = std::fabs(fd - grad[i]) /
                 std::max(1.0, std::max(std::fabs(fd), std::fabs(grad[i])));
    worst = std::max(worst, rel);
  }
  if (worst > 1e-4) {
    detail = "finite-difference relative error " + std::to_string(worst);
    return false;
  }

  // zero advantage must leave every parameter untouched
  ControllerState zs = ControllerState::init(5, 9);
  Trajectory traj = sample_actions(zs, 3);
  traj.reward = 0.42;
  zs.baseline = traj.reward;
  std::vector<double> before;
  for (double* p : zs.param_refs()) before.push_back(*p);
  policy_gradient_update(zs, traj);
  auto after = zs.param_refs();
  for (size_t i = 0; i < after.size(); ++i)
    if (*after[i] != before[i]) {
      detail = "zero-advantage update moved a parameter";
      return false;
    }

  // learning smoke: rewards for matching a planted target must trend up
  ControllerState ls = ControllerState::init(6, 2024);
  ls.lr = 0.05;
  std::vector<int> target = {1, 2, 3};
  std::vector<double> rewards;
  for (int ep = 0; ep < 300; ++ep) {
    Trajectory t = sample_actions(ls, 3);
    int hits = 0;
    for (size_t s = 0; s < target.size(); ++s)
      if (t.actions[s] == target[s]) ++hits;
    t.reward = hits / 3.0;
    policy_gradient_update(ls, t);
    rewards.push_back(t.reward);
  }
  auto mean = [&](size_t b, size_t e) {
    double s = 0;
    for (size_t i = b; i < e; ++i) s += rewards[i];
    return s / static_cast<double>(e - b);
  };
  double first50 = mean(0, 50), last50 = mean(250, 300);
  std::ostringstream os;
  os << "fd rel err " << worst << "; reward mean " << first50 << " -> "
     << last50;
  detail = os.str();
  return last50 > first50;
}

bool c8_search(std::string& detail) {
  PatternLibrary lib = chain_library({2, 3, 4, 5, 7, 9});  // bands H,H,M,M,L,L
  RewardConfig cfg;
  cfg.latency_constraint = 1.0;
  cfg.accuracy_constraint = 0.82;

  auto eval_of = [&](const std::vector<int>& a) {
    EpisodeEval e;
    e.min_accuracy = 0.60 + 0.03 * (a[0] + a[1] + a[2]);
    e.max_latency = 0.01 * (lib.at(a[0]).popcount() + lib.at(a[1]).popcount() +
                            lib.at(a[2]).popcount());
    return e;
  };

  // brute-force pre-scoring of all 6^3 ordered triples
  std::set<std::vector<int>> satisfying;
  int enumerated = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      for (int c = 0; c < 6; ++c) {
        std::vector<int> actions = {a, b, c};
        RewardCase rc;
        compute_reward(eval_of(actions), cfg, actions, lib, &rc);
        if (rc == RewardCase::Satisfied) satisfying.insert(actions);
        ++enumerated;
      }
  if (enumerated != 216 || satisfying.empty()) {
    detail = "brute-force table malformed";
    return false;
  }

  int successes = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ControllerState state = ControllerState::init(lib.size(), seed);
    SearchResult result = search(state, lib, cfg, eval_of, 3, 300);
    if (result.satisfied && satisfying.count(result.best_actions)) ++successes;
  }
  long full_space = 44L * 44L * 44L;
  std::ostringstream os;
  os << successes << "/10 seeds satisfied (" << satisfying.size() << "/216 "
     << "triples satisfy); full library space " << full_space;
  detail = os.str();
  return successes >= 9 && full_space == 85184;
}

bool c9_latency_predictor(std::string& detail) {
  DeviceProfile dev = default_device();
  std::vector<CalibrationSample> samples = generate_default_calibration(dev, 5);
  LatencyProfile profile = fit_profile(samples);

  // per-group R^2 against the calibration data
  std::map<std::pair<ComputeMode, LayerKind>, std::vector<std::pair<double, double>>>
      groups;
  for (const CalibrationSample& s : samples) {
    const ProfileEntry& e = profile.at(s.mode, s.kind);
    double kept = static_cast<double>(s.macs()) * (1.0 - s.sparsity);
    groups[{s.mode, s.kind}].push_back(
        {s.latency_s, e.slope * kept + e.intercept});
  }
  double worst_r2 = 1.0;
  for (const auto& [key, pts] : groups) {
    double mean = 0;
    for (auto& p : pts) mean += p.first;
    mean /= static_cast<double>(pts.size());
    double ss_tot = 0, ss_res = 0;
    for (auto& p : pts) {
      ss_tot += (p.first - mean) * (p.first - mean);
      ss_res += (p.first - p.second) * (p.first - p.second);
    }
    worst_r2 = std::min(worst_r2, 1.0 - ss_res / ss_tot);
  }
  if (worst_r2 < 0.99) {
    detail = "worst group R^2 " + std::to_string(worst_r2);
    return false;
  }

  // density monotonicity and mode ordering on random layers
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> ch(1, 6), hw(6, 12), fc(4, 40);
  std::uniform_real_distribution<double> kf(0.05, 1.0);
  for (int i = 0; i < 1000; ++i) {
    LayerDef layer;
    std::array<int, 3> in_shape;
    if (i % 2 == 0) {
      int ic = ch(rng);
      layer = ConvLayer{ic, ch(rng), 3, 3, 1, Activation::None};
      in_shape = {ic, hw(rng), hw(rng)};
    } else {
      int m = fc(rng);
      layer = FcLayer{m, fc(rng), 1, 1, Activation::None};
      in_shape = {1, 1, m};
    }
    double k1 = kf(rng), k2 = kf(rng);
    if (k1 > k2) std::swap(k1, k2);
    for (ComputeMode mode : {ComputeMode::Cpu, ComputeMode::LeaRegular,
                             ComputeMode::LeaIrregular}) {
      if (predict_layer(profile, layer, in_shape, k1, mode) >
          predict_layer(profile, layer, in_shape, k2, mode) + 1e-12) {
        detail = "latency not monotone in kept fraction";
        return false;
      }
    }
    double reg = predict_layer(profile, layer, in_shape, k2, ComputeMode::LeaRegular);
    double irr = predict_layer(profile, layer, in_shape, k2, ComputeMode::LeaIrregular);
    double cpu = predict_layer(profile, layer, in_shape, k2, ComputeMode::Cpu);
    if (!(reg <= irr + 1e-12 && irr <= cpu + 1e-12)) {
      detail = "mode ordering violated";
      return false;
    }
  }
  std::ostringstream os;
  os << "worst group R^2 " << worst_r2 << "; 1000 random layers ordered";
  detail = os.str();
  return true;
}

bool c10_simulator_physics(std::string& detail) {
  DeviceProfile dev = default_device();

  // closed-form charge time from empty at 3 mW
  PowerTrace charge3 = PowerTrace::constant(3e-3);
  auto events = simulate_power(dev, charge3, PowerTrace::constant(0), 1.0);
  if (events.empty() || events[0].kind != "power_on" ||
      events[0].t != dev.energy_on() / 3e-3 ||
      std::fabs(events[0].t - 0.18150) > 1e-9) {
    detail = "charge-from-empty time mismatch";
    return false;
  }

  // hysteresis cycling vs a fine-step integrator with crossing interpolation
  double horizon = 1.0;
  auto cyc = simulate_power(dev, PowerTrace::constant(5e-3),
                            PowerTrace::constant(dev.active_power), horizon);
  std::vector<std::pair<double, std::string>> oracle;
  {
    double t = 0, e = 0;
    bool powered = false;
    const double dt = 1e-6;
    while (t < horizon) {
      double net = 5e-3 - (powered ? dev.active_power : 0.0);
      double e2 = std::min(e + net * dt, dev.energy_on());
      if (!powered && e2 >= dev.energy_on()) {
        double cross = t + (dev.energy_on() - e) / net;
        oracle.push_back({cross, "power_on"});
        powered = true;
        t = cross;
        e = dev.energy_on();
        continue;
      }
      if (powered && e2 <= dev.energy_off()) {
        double cross = t + (e - dev.energy_off()) / -net;
        oracle.push_back({cross, "power_off"});
        powered = false;
        t = cross;
        e = dev.energy_off();
        continue;
      }
      t += dt;
      e = e2;
    }
    while (!oracle.empty() && oracle.back().first > horizon) oracle.pop_back();
  }
  if (cyc.size() != oracle.size()) {
    detail = "event count " + std::to_string(cyc.size()) + " vs oracle " +
             std::to_string(oracle.size());
    return false;
  }
  double worst_dt = 0;
  for (size_t i = 0; i < cyc.size(); ++i) {
    if (cyc[i].kind != oracle[i].second) {
      detail = "event kind mismatch at index " + std::to_string(i);
      return false;
    }
    worst_dt = std::max(worst_dt, std::fabs(cyc[i].t - oracle[i].first));
  }
  if (worst_dt > 10e-6) {
    detail = "fine-step oracle drift " + std::to_string(worst_dt) + " s";
    return false;
  }

  // interruption invariance: scores are bit-exact under 50 random traces
  TrainedFixture& fx = trained_fixture();
  std::vector<Tensor> inputs = random_inputs(fx.def, 5, 77);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> seg(0.01, 0.2);
  std::uniform_int_distribution<int> level(0, 3);  // 0 -> outage
  for (int trial = 0; trial < 50; ++trial) {
    PowerTrace trace;
    double t = 0;
    int segments = 2 + trial % 5;
    for (int s = 0; s < segments; ++s) {
      trace.steps.push_back({t, level(rng) == 0 ? 0.0 : 2e-3 + seg(rng) * 20e-3});
      t += seg(rng);
    }
    trace.steps.push_back({t, 4e-3});  // guarantee eventual completion
    int m = trial % fx.bundle.num_models;
    const Tensor& input = inputs[static_cast<size_t>(trial) % inputs.size()];
    Tensor expect = condensed_forward(fx.bundle, m, input);
    auto [got, rep] = run_inference_intermittent(fx.bundle, m, input, dev, trace);
    if (!bit_equal(expect.data, got.data)) {
      detail = "scores diverged on random trace " + std::to_string(trial);
      return false;
    }
  }
  std::ostringstream os;
  os << "charge time exact; oracle drift " << worst_dt * 1e6
     << " us; 50 interrupted runs bit-exact";
  detail = os.str();
  return true;
}

bool c11_harvest_trend(std::string& detail) {
  TrainedFixture& fx = trained_fixture();
  DeviceProfile dev = default_device();
  std::vector<Tensor> inputs = random_inputs(fx.def, 10, 3);
  std::ostringstream os;
  for (int m = 0; m < fx.bundle.num_models; ++m) {
    AdaptiveOptions opts;
    opts.adaptive = false;
    opts.fixed_model = m;
    double prev = -1;
    os << (m ? "; " : "") << "model " << m << ":";
    for (double p : {5e-3, 4e-3, 3e-3}) {
      double total = total_elapsed(run_adaptive(
          fx.bundle, inputs, dev, PowerTrace::constant(p), opts));
      os << " " << total;
      if (total <= prev) {
        detail = "completion time not strictly increasing as harvest drops";
        return false;
      }
      prev = total;
    }
  }
  detail = os.str();
  return true;
}

bool c12_adaptive_speedup(std::string& detail) {
  TrainedFixture& fx = trained_fixture();
  DeviceProfile dev = default_device();
  PowerTrace mixed;
  mixed.steps = {{0.0, 5e-3}, {0.1, 4e-3}, {0.6, 3e-3}};
  std::vector<Tensor> inputs = random_inputs(fx.def, 800, 19);

  AdaptiveOptions adaptive;  // defaults: adaptive, shared switching
  double t_adaptive = total_elapsed(run_adaptive(fx.bundle, inputs, dev, mixed,
                                                 adaptive));

  AdaptiveOptions noprune;
  noprune.adaptive = false;
  noprune.fixed_model = fx.bundle.num_models - 1;  // always the dense model
  double t_noprune = total_elapsed(run_adaptive(fx.bundle, inputs, dev, mixed,
                                                noprune));

  AdaptiveOptions reload = adaptive;
  reload.shared_switching = false;  // every switch rewrites the full model
  double t_reload = total_elapsed(run_adaptive(fx.bundle, inputs, dev, mixed,
                                               reload));

  std::ostringstream os;
  os << "adaptive " << t_adaptive << " s, dense " << t_noprune << " s ("
     << t_noprune / t_adaptive << "x), full-reload " << t_reload << " s";
  detail = os.str();
  return t_noprune >= 2.0 * t_adaptive && t_reload > t_adaptive;
}

bool c13_extraction_overhead(std::string& detail) {
  DeviceProfile dev = default_device();
  double base = measure_extraction_overhead(trained_fixture().bundle, dev);
  if (!(base < 0.05)) {
    detail = "default bundle extraction fraction " + std::to_string(base);
    return false;
  }
  // overhead grows with the number of packed models
  NetworkDef def = toy_network();
  std::vector<int> kept_counts = {2, 3, 5, 7, 9};
  double prev = -1;
  std::ostringstream os;
  os << "default " << base << "; by model count:";
  for (int n = 2; n <= 5; ++n) {
    std::vector<int> counts(kept_counts.end() - n, kept_counts.end());
    PatternLibrary lib = chain_library(counts);
    std::vector<ModelAssignment> assignments;
    for (int id = 0; id < n; ++id)
      assignments.push_back(ModelAssignment::uniform(def, id));
    MasterBundle mb = build_master_bundle(def, lib, assignments, 23);
    double frac = measure_extraction_overhead(mb.bundle, dev);
    os << " " << frac;
    if (frac <= prev) {
      detail = "extraction fraction not monotone in model count";
      return false;
    }
    prev = frac;
  }
  detail = os.str();
  return true;
}

bool c14_format_stability(std::string& detail) {
  std::string path = std::string(EVE_GOLDEN_DIR) + "/toy_bundle.swm";
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    detail = "missing golden file " + path;
    return false;
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  SwmBundle bundle = deserialize(bytes);
  if (serialize(bundle) != bytes) {
    detail = "golden file does not round-trip byte-exactly";
    return false;
  }

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<size_t> pos(0, bytes.size() * 8 - 1);
  int detected = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<uint8_t> corrupt = bytes;
    size_t bit = pos(rng);
    corrupt[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
    try {
      deserialize(corrupt);
    } catch (const std::exception&) {
      ++detected;
    }
  }
  detail = "round-trip byte-exact; " + std::to_string(detected) +
           "/100 single-bit corruptions detected";
  return detected == 100;
}

}  // namespace

int main() {
  criterion(1, "codec round-trip", 60, c1_codec_round_trip);
  criterion(2, "extraction trace fidelity", 60, c2_extraction_trace);
  criterion(3, "payload size law", 60, c3_size_law);
  criterion(4, "condensed execution parity", 60, c4_condensed_execution);
  criterion(5, "shared-weight training", 600, c5_shared_training);
  criterion(6, "reward cases", 60, c6_reward_cases);
  criterion(7, "policy gradient", 300, c7_policy_gradient);
  criterion(8, "constrained pattern search", 300, c8_search);
  criterion(9, "latency predictor", 60, c9_latency_predictor);
  criterion(10, "simulator physics", 300, c10_simulator_physics);
  criterion(11, "harvest-rate trend", 300, c11_harvest_trend);
  criterion(12, "adaptive speedup", 300, c12_adaptive_speedup);
  criterion(13, "extraction overhead", 300, c13_extraction_overhead);
  criterion(14, "format stability", 60, c14_format_stability);

  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all 14 criteria passed\n");
  return 0;
}
