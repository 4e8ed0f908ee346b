// Command-line pipeline driver: pattern generation, shared training, RL
// pattern search, bundle packing/extraction, latency prediction, and the
// intermittent-power simulator, all emitting plot-ready CSVs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "eve/controller.hpp"
#include "eve/latency.hpp"
#include "eve/nn.hpp"
#include "eve/patterns.hpp"
#include "eve/runtime.hpp"
#include "eve/shared_training.hpp"
#include "eve/swm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eve;

namespace {

constexpr int kExitConfig = 2;  // bad flags, missing/malformed input files
constexpr int kExitDomain = 3;  // pipeline-level failures

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_input(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("missing input file: " + path);
  return path;
}

NetworkDef default_network() {
  NetworkDef def;
  def.input_ch = 1;
  def.input_h = kImageSize;
  def.input_w = kImageSize;
  def.layers = {ConvLayer{1, 4, 3, 3, 1, Activation::Relu},
                PoolLayer{PoolLayer::Kind::Max, 2},
                FcLayer{36, 9, 3, 3, Activation::None}};
  return def;
}

struct Common {
  uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = "out";
  json config;  // parsed --config file, may be null

  void load_config() {
    if (config_path.empty()) return;
    try {
      config = json::parse(read_text(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config file: " + std::string(e.what()));
    }
  }
  template <typename T>
  T opt(const char* key, T fallback) const {
    if (config.is_object() && config.contains(key))
      return config.at(key).get<T>();
    return fallback;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "deterministic seed");
  app->add_option("--config", c.config_path, "JSON config file");
  app->add_option("--out", c.out_dir, "output directory");
}

NetworkDef load_network(const Common& c, const std::string& path) {
  if (!path.empty()) return NetworkDef::from_json_file(require_input(path));
  std::string cfg = c.opt<std::string>("network", "");
  if (!cfg.empty()) return NetworkDef::from_json_file(require_input(cfg));
  return default_network();
}

PatternLibrary load_library(const Common& c, const std::string& path) {
  std::string p = path.empty() ? c.opt<std::string>("patterns", "") : path;
  if (!p.empty()) return PatternLibrary::from_json_file(require_input(p));
  return generate_pattern_space(3, 3, {4, 4, 4}, c.seed + 1000);
}

Dataset load_dataset(const Common& c) {
  return make_synthetic_dataset(c.opt<uint64_t>("data_seed", c.seed + 7),
                                c.opt<int>("num_classes", 9),
                                c.opt<int>("samples_per_class", 32));
}

std::vector<ModelAssignment> uniform_assignments(const NetworkDef& def,
                                                 const std::vector<int>& ids) {
  std::vector<ModelAssignment> out;
  for (int id : ids) out.push_back(ModelAssignment::uniform(def, id));
  return out;
}

struct TrainedArtifacts {
  NetworkDef def;
  PatternLibrary library;
  std::vector<int> pattern_ids;
  std::vector<TrainedModel> models;
  SharedTrainingReport report;
  SwmBundle bundle;
};

TrainedArtifacts train_pipeline(const Common& c, const std::string& net_path,
                                const std::string& lib_path,
                                std::vector<int> ids, int epochs, double lr) {
  TrainedArtifacts art;
  art.def = load_network(c, net_path);
  art.library = load_library(c, lib_path);
  if (ids.empty()) ids = c.opt<std::vector<int>>("pattern_ids", {});
  if (ids.empty()) {
    // default: one pattern per band, high -> low sparsity. Prefer patterns
    // that leave no kernel column fully pruned (an FC output column with no
    // kept bit would lose all its weights), then the densest in the band.
    auto pick = [&](SparsityBand band) {
      int best = -1, best_cov = -1, best_pop = -1;
      for (const Pattern& p : art.library.patterns) {
        if (art.library.band_of(p.id) != band) continue;
        int cov = 0;
        for (int col = 0; col < p.y; ++col)
          for (int row = 0; row < p.x; ++row)
            if (p.bit(row, col)) { ++cov; break; }
        int pop = p.popcount();
        if (cov > best_cov || (cov == best_cov && pop > best_pop)) {
          best = p.id;
          best_cov = cov;
          best_pop = pop;
        }
      }
      return best;
    };
    int high = pick(SparsityBand::High), med = pick(SparsityBand::Medium),
        low = pick(SparsityBand::Low);
    if (high < 0 || med < 0 || low < 0)
      throw ConfigError("pattern library lacks one of the three bands");
    ids = {high, med, low};
  }
  art.pattern_ids = ids;
  auto assignments = uniform_assignments(art.def, ids);
  MaskSchedule schedule = build_mask_schedule(art.def, assignments, art.library);
  TrainHyper hyper;
  hyper.seed = c.seed;
  hyper.epochs = epochs > 0 ? epochs : c.opt<int>("epochs", 5);
  hyper.lr = lr > 0 ? static_cast<float>(lr) : c.opt<float>("lr", 0.25f);
  hyper.batch_size = c.opt<int>("batch_size", 16);
  Dataset data = load_dataset(c);
  art.models = train_shared_sequence(schedule, data, hyper, &art.report);
  art.bundle = compress(art.models, assignments, art.library);
  return art;
}

int cmd_gen_patterns(const Common& c, int x, int y, int high, int med, int low) {
  PatternLibrary lib = generate_pattern_space(x, y, {high, med, low}, c.seed);
  write_text(fs::path(c.out_dir) / "patterns.json", lib.to_json_text());
  std::cout << "wrote " << lib.size() << " patterns to "
            << (fs::path(c.out_dir) / "patterns.json").string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& net_path,
              const std::string& lib_path, const std::vector<int>& ids,
              int epochs, double lr) {
  TrainedArtifacts art = train_pipeline(c, net_path, lib_path, ids, epochs, lr);
  fs::path out(c.out_dir);
  write_text(out / "training_report.csv", art.report.to_csv());
  write_bundle(art.bundle, (out / "bundle.swm").string());
  write_text(out / "network.json", art.def.to_json_text());
  write_text(out / "patterns.json", art.library.to_json_text());
  std::cout << "trained " << art.models.size() << " shared models, sharing "
            << (art.report.sharing_verified ? "verified" : "FAILED") << "\n";
  for (size_t i = 0; i < art.report.models.size(); ++i)
    std::cout << "model " << i << ": sparsity "
              << art.report.models[i].sparsity << " accuracy "
              << art.report.models[i].accuracy << "\n";
  return art.report.sharing_verified ? 0 : kExitDomain;
}

LatencyProfile load_profile(const Common& c, const std::string& calib_path) {
  std::string p = calib_path.empty() ? c.opt<std::string>("calibration", "")
                                     : calib_path;
  if (!p.empty()) return fit_profile(calibration_from_csv_file(require_input(p)));
  DeviceProfile dev;
  calibrate_tracker_thresholds(dev);
  return fit_profile(generate_default_calibration(dev, c.seed + 2000));
}

int cmd_search(const Common& c, const std::string& net_path,
               const std::string& lib_path, const std::string& calib_path,
               double latency_c, double accuracy_c, int episodes, int models) {
  NetworkDef def = load_network(c, net_path);
  PatternLibrary library = load_library(c, lib_path);
  LatencyProfile profile = load_profile(c, calib_path);
  Dataset data = load_dataset(c);
  TrainHyper hyper;
  hyper.seed = c.seed;
  hyper.epochs = c.opt<int>("epochs", 3);

  RewardConfig cfg;
  cfg.latency_constraint = latency_c;
  cfg.accuracy_constraint = accuracy_c;

  std::map<std::vector<int>, EpisodeEval> cache;
  SearchEnv env = [&](const std::vector<int>& actions) {
    auto it = cache.find(actions);
    if (it != cache.end()) return it->second;
    auto assignments = uniform_assignments(def, actions);
    MaskSchedule schedule = build_mask_schedule(def, assignments, library);
    std::vector<TrainedModel> trained =
        train_shared_sequence(schedule, data, hyper);
    EpisodeEval eval;
    eval.min_accuracy = 1.0;
    for (size_t m = 0; m < trained.size(); ++m) {
      eval.min_accuracy = std::min(
          eval.min_accuracy, evaluate_accuracy(trained[m], data.holdout));
      eval.max_latency =
          std::max(eval.max_latency,
                   predict_model(profile, def, assignments[m], library,
                                 ComputeMode::Cpu));
    }
    cache[actions] = eval;
    return eval;
  };

  ControllerState state = ControllerState::init(library.size(), c.seed);
  fs::create_directories(c.out_dir);
  std::ofstream log(fs::path(c.out_dir) / "episodes.csv");
  SearchResult result = search(state, library, cfg, env, models, episodes, &log);

  json best = {{"actions", result.best_actions},
               {"reward", result.best_reward},
               {"satisfied", result.satisfied},
               {"episodes", result.episodes}};
  write_text(fs::path(c.out_dir) / "best_assignment.json", best.dump(2));
  std::cout << "search " << (result.satisfied ? "satisfied" : "unsatisfied")
            << " after " << result.episodes << " episodes; best reward "
            << result.best_reward << "\n";
  return 0;
}

int cmd_pack(const Common& c, const std::string& net_path,
             const std::string& lib_path, const std::vector<int>& ids,
             int epochs, double lr) {
  TrainedArtifacts art = train_pipeline(c, net_path, lib_path, ids, epochs, lr);
  fs::path out = fs::path(c.out_dir) / "bundle.swm";
  write_bundle(art.bundle, out.string());
  long dense = 0;
  for (const auto& m : art.models)
    for (const auto& w : m.weights) dense += w.size();
  std::cout << "packed " << art.bundle.num_models << " models into "
            << out.string() << " (" << fs::file_size(out) << " bytes; dense "
            << dense << " weights)\n";
  return 0;
}

int cmd_extract(const Common& c, const std::string& bundle_path, int model) {
  SwmBundle bundle = read_bundle(require_input(bundle_path));
  if (model < 0 || model >= bundle.num_models)
    throw ConfigError("model index out of range");
  auto kernels = extract_model(bundle, model);
  std::ostringstream out;
  out << "layer,kernel,pattern,values\n";
  for (size_t li = 0; li < kernels.size(); ++li)
    for (size_t k = 0; k < kernels[li].size(); ++k) {
      const CondensedKernel& ck = kernels[li][k];
      out << li << ',' << k << ',' << ck.pattern.to_bitstring() << ",\"";
      for (size_t v = 0; v < ck.values.size(); ++v)
        out << (v ? " " : "") << ck.values[v];
      out << "\"\n";
    }
  write_text(fs::path(c.out_dir) / "condensed.csv", out.str());
  std::cout << "extracted model " << model << " to "
            << (fs::path(c.out_dir) / "condensed.csv").string() << "\n";
  return 0;
}

int cmd_predict(const Common& c, const std::string& net_path,
                const std::string& lib_path, const std::string& calib_path,
                const std::vector<int>& ids, const std::string& mode_s) {
  NetworkDef def = load_network(c, net_path);
  PatternLibrary library = load_library(c, lib_path);
  LatencyProfile profile = load_profile(c, calib_path);
  ComputeMode mode = parse_mode(mode_s);
  std::ostringstream out;
  out << "pattern_id,predicted_latency_s\n";
  out.precision(9);
  for (int id : ids) {
    ModelAssignment a = ModelAssignment::uniform(def, id);
    double latency = predict_model(profile, def, a, library, mode);
    out << id << ',' << latency << '\n';
    std::cout << "pattern " << id << ": " << latency << " s (" << mode_s << ")\n";
  }
  write_text(fs::path(c.out_dir) / "predictions.csv", out.str());
  return 0;
}

PowerTrace load_trace(const Common& c, const std::string& trace_path,
                      double const_power) {
  if (!trace_path.empty()) return PowerTrace::from_csv_file(require_input(trace_path));
  std::string p = c.opt<std::string>("trace", "");
  if (!p.empty()) return PowerTrace::from_csv_file(require_input(p));
  if (const_power > 0) return PowerTrace::constant(const_power);
  // default mixed trace: high -> low -> medium harvest
  PowerTrace tr;
  tr.steps = {{0.0, 5e-3}, {20.0, 3e-3}, {60.0, 4e-3}};
  return tr;
}

int cmd_simulate(const Common& c, const std::string& bundle_path,
                 const std::string& trace_path, double const_power,
                 int inferences, bool adaptive, int fixed_model,
                 const std::string& device_path) {
  SwmBundle bundle = read_bundle(require_input(bundle_path));
  DeviceProfile device = device_path.empty()
                             ? DeviceProfile{}
                             : DeviceProfile::from_json_file(require_input(device_path));
  if (device.tracker_threshold_high_s <= 0) calibrate_tracker_thresholds(device);
  PowerTrace trace = load_trace(c, trace_path, const_power);

  NetworkDef def = bundle.network_def();
  auto shapes = def.activation_shapes();
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<Tensor> inputs;
  for (int i = 0; i < inferences; ++i) {
    Tensor t({shapes[0][0], shapes[0][1], shapes[0][2]});
    for (auto& v : t.data) v = dist(rng);
    inputs.push_back(std::move(t));
  }

  AdaptiveOptions opts;
  opts.adaptive = adaptive;
  opts.fixed_model = fixed_model;
  std::vector<SimEvent> events;
  std::vector<RunReport> reports =
      run_adaptive(bundle, inputs, device, trace, opts, &events);

  std::ostringstream out;
  out << RunReport::csv_header() << '\n';
  double total = 0;
  for (size_t i = 0; i < reports.size(); ++i) {
    out << reports[i].to_csv_row(static_cast<int>(i)) << '\n';
    total = reports[i].start_time + reports[i].completion_time;
  }
  write_text(fs::path(c.out_dir) / "run_report.csv", out.str());
  write_text(fs::path(c.out_dir) / "events.csv", events_to_csv(events));
  std::cout << inferences << " inferences ("
            << (adaptive ? "adaptive" : "fixed model " + std::to_string(fixed_model))
            << ") finished at t=" << total << " s\n";
  return 0;
}

int cmd_report(const Common& c, const std::string& net_path,
               const std::string& lib_path, const std::string& calib_path,
               const std::vector<int>& ids, int epochs, double lr) {
  TrainedArtifacts art = train_pipeline(c, net_path, lib_path, ids, epochs, lr);
  LatencyProfile profile = load_profile(c, calib_path);
  std::ostringstream out;
  out << "model_index,pattern_id,sparsity,accuracy,predicted_latency_s\n";
  out.precision(9);
  for (size_t m = 0; m < art.models.size(); ++m) {
    ModelAssignment a = ModelAssignment::uniform(art.def, art.pattern_ids[m]);
    double latency =
        predict_model(profile, art.def, a, art.library, ComputeMode::Cpu);
    out << m << ',' << art.pattern_ids[m] << ',' << art.report.models[m].sparsity
        << ',' << art.report.models[m].accuracy << ',' << latency << '\n';
  }
  write_text(fs::path(c.out_dir) / "summary.csv", out.str());
  std::cout << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pattern-pruned shared-weight model pipeline"};
  app.require_subcommand(1);

  Common c;
  int x = 3, y = 3, n_high = 15, n_med = 15, n_low = 14;
  std::string net_path, lib_path, calib_path, bundle_path = "out/bundle.swm";
  std::string trace_path, device_path, mode_s = "cpu";
  std::vector<int> ids;
  int epochs = 0, episodes = 300, model = 0, inferences = 20, num_models = 3;
  double lr = 0, latency_c = 1.0, accuracy_c = 0.5, const_power = 0;
  bool fixed = false;

  auto* gen = app.add_subcommand("gen-patterns", "generate a pattern library");
  add_common(gen, c);
  gen->add_option("--x", x);
  gen->add_option("--y", y);
  gen->add_option("--high", n_high, "high-sparsity band count");
  gen->add_option("--medium", n_med);
  gen->add_option("--low", n_low);

  auto* train = app.add_subcommand("train", "shared-weight training + packing");
  add_common(train, c);
  train->add_option("--network", net_path);
  train->add_option("--patterns", lib_path);
  train->add_option("--pattern-ids", ids, "one pattern id per model, sparse first");
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);

  auto* srch = app.add_subcommand("search", "RL search over pattern triples");
  add_common(srch, c);
  srch->add_option("--network", net_path);
  srch->add_option("--patterns", lib_path);
  srch->add_option("--calibration", calib_path);
  srch->add_option("--latency-constraint", latency_c);
  srch->add_option("--accuracy-constraint", accuracy_c);
  srch->add_option("--episodes", episodes);
  srch->add_option("--models", num_models);

  auto* pack = app.add_subcommand("pack", "train and write the packed bundle");
  add_common(pack, c);
  pack->add_option("--network", net_path);
  pack->add_option("--patterns", lib_path);
  pack->add_option("--pattern-ids", ids);
  pack->add_option("--epochs", epochs);
  pack->add_option("--lr", lr);

  auto* extr = app.add_subcommand("extract", "dump one model's condensed kernels");
  add_common(extr, c);
  extr->add_option("--bundle", bundle_path);
  extr->add_option("--model", model);

  auto* pred = app.add_subcommand("predict", "latency prediction per pattern");
  add_common(pred, c);
  pred->add_option("--network", net_path);
  pred->add_option("--patterns", lib_path);
  pred->add_option("--calibration", calib_path);
  pred->add_option("--pattern-ids", ids)->required();
  pred->add_option("--mode", mode_s, "cpu | lea_regular | lea_irregular");

  auto* sim = app.add_subcommand("simulate", "intermittent-power workload run");
  add_common(sim, c);
  sim->add_option("--bundle", bundle_path);
  sim->add_option("--trace", trace_path, "power trace csv");
  sim->add_option("--power", const_power, "constant harvest watts");
  sim->add_option("--inferences", inferences);
  sim->add_option("--device", device_path);
  sim->add_flag("--fixed", fixed, "disable adaptive selection");
  sim->add_option("--model", model, "fixed model index");

  auto* rep = app.add_subcommand("report", "per-model sparsity/accuracy/latency");
  add_common(rep, c);
  rep->add_option("--network", net_path);
  rep->add_option("--patterns", lib_path);
  rep->add_option("--calibration", calib_path);
  rep->add_option("--pattern-ids", ids);
  rep->add_option("--epochs", epochs);
  rep->add_option("--lr", lr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    c.load_config();
    if (gen->parsed()) return cmd_gen_patterns(c, x, y, n_high, n_med, n_low);
    if (train->parsed()) return cmd_train(c, net_path, lib_path, ids, epochs, lr);
    if (srch->parsed())
      return cmd_search(c, net_path, lib_path, calib_path, latency_c,
                        accuracy_c, episodes, num_models);
    if (pack->parsed()) return cmd_pack(c, net_path, lib_path, ids, epochs, lr);
    if (extr->parsed()) return cmd_extract(c, bundle_path, model);
    if (pred->parsed())
      return cmd_predict(c, net_path, lib_path, calib_path, ids, mode_s);
    if (sim->parsed())
      return cmd_simulate(c, bundle_path, trace_path, const_power, inferences,
                          !fixed, model, device_path);
    if (rep->parsed())
      return cmd_report(c, net_path, lib_path, calib_path, ids, epochs, lr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitConfig;
}
