#include "eve/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eve {

ControllerState ControllerState::init(int vocab, uint64_t seed, int hidden) {
  if (vocab < 1) throw std::runtime_error("controller: empty action space");
  ControllerState s;
  s.vocab = vocab;
  s.hidden = hidden;
  s.rng.seed(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  auto fill = [&](std::vector<double>& v, size_t n) {
    v.resize(n);
    for (auto& x : v) x = normal(s.rng);
  };
  fill(s.w_xh, static_cast<size_t>(hidden) * vocab);
  fill(s.w_hh, static_cast<size_t>(hidden) * hidden);
  s.b_h.assign(static_cast<size_t>(hidden), 0.0);
  fill(s.w_ho, static_cast<size_t>(vocab) * hidden);
  s.b_o.assign(static_cast<size_t>(vocab), 0.0);
  fill(s.start, static_cast<size_t>(vocab));
  return s;
}

size_t ControllerState::param_count() const {
  return w_xh.size() + w_hh.size() + b_h.size() + w_ho.size() + b_o.size() +
         start.size();
}

std::vector<double*> ControllerState::param_refs() {
  std::vector<double*> refs;
  refs.reserve(param_count());
  for (auto* vec : {&w_xh, &w_hh, &b_h, &w_ho, &b_o, &start})
    for (auto& v : *vec) refs.push_back(&v);
  return refs;
}

namespace {

struct StepCache {
  std::vector<double> x, h_pre, h, probs;
  int action = -1;
};

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Forward one step: given input x and previous hidden state, produce the
// new hidden state and action probabilities.
StepCache rnn_step(const ControllerState& s, std::vector<double> x,
                   const std::vector<double>& h_prev) {
  const int H = s.hidden, V = s.vocab;
  StepCache c;
  c.x = std::move(x);
  c.h_pre.assign(static_cast<size_t>(H), 0.0);
  for (int i = 0; i < H; ++i) {
    double acc = s.b_h[static_cast<size_t>(i)];
    for (int j = 0; j < V; ++j)
      acc += s.w_xh[static_cast<size_t>(i) * V + j] * c.x[static_cast<size_t>(j)];
    for (int j = 0; j < H; ++j)
      acc += s.w_hh[static_cast<size_t>(i) * H + j] * h_prev[static_cast<size_t>(j)];
    c.h_pre[static_cast<size_t>(i)] = acc;
  }
  c.h.resize(static_cast<size_t>(H));
  for (int i = 0; i < H; ++i)
    c.h[static_cast<size_t>(i)] = std::tanh(c.h_pre[static_cast<size_t>(i)]);
  std::vector<double> logits(static_cast<size_t>(V));
  for (int o = 0; o < V; ++o) {
    double acc = s.b_o[static_cast<size_t>(o)];
    for (int i = 0; i < H; ++i)
      acc += s.w_ho[static_cast<size_t>(o) * H + i] * c.h[static_cast<size_t>(i)];
    logits[static_cast<size_t>(o)] = acc;
  }
  c.probs = softmax(logits);
  return c;
}

std::vector<StepCache> run_forward(const ControllerState& s,
                                   const std::vector<int>* forced_actions,
                                   int num_slots, std::mt19937_64* rng) {
  std::vector<StepCache> steps;
  std::vector<double> h(static_cast<size_t>(s.hidden), 0.0);
  std::vector<double> x = s.start;
  for (int t = 0; t < num_slots; ++t) {
    StepCache c = rnn_step(s, x, h);
    if (forced_actions) {
      c.action = (*forced_actions)[static_cast<size_t>(t)];
      if (c.action < 0 || c.action >= s.vocab)
        throw std::runtime_error("controller: action id out of range");
    } else {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      double u = uni(*rng), acc = 0;
      c.action = s.vocab - 1;
      for (int a = 0; a < s.vocab; ++a) {
        acc += c.probs[static_cast<size_t>(a)];
        if (u < acc) { c.action = a; break; }
      }
    }
    h = c.h;
    x.assign(static_cast<size_t>(s.vocab), 0.0);
    x[static_cast<size_t>(c.action)] = 1.0;
    steps.push_back(std::move(c));
  }
  return steps;
}

}  // namespace

Trajectory sample_actions(ControllerState& state, int num_slots) {
  if (num_slots < 1) throw std::runtime_error("sample_actions: need >= 1 slot");
  auto steps = run_forward(state, nullptr, num_slots, &state.rng);
  Trajectory traj;
  for (const auto& c : steps) {
    traj.actions.push_back(c.action);
    traj.log_probs.push_back(std::log(c.probs[static_cast<size_t>(c.action)]));
  }
  return traj;
}

double weighted_log_prob(const ControllerState& state,
                         const std::vector<int>& actions) {
  auto steps = run_forward(state, &actions, static_cast<int>(actions.size()), nullptr);
  const int S = static_cast<int>(actions.size());
  double obj = 0;
  for (int t = 0; t < S; ++t)
    obj += std::pow(state.beta, S - 1 - t) *
           std::log(steps[static_cast<size_t>(t)].probs[static_cast<size_t>(actions[static_cast<size_t>(t)])]);
  return obj;
}

std::vector<double> weighted_log_prob_grad(const ControllerState& state,
                                           const std::vector<int>& actions,
                                           double* value) {
  const int S = static_cast<int>(actions.size());
  const int H = state.hidden, V = state.vocab;
  auto steps = run_forward(state, &actions, S, nullptr);

  std::vector<double> g_wxh(state.w_xh.size(), 0.0), g_whh(state.w_hh.size(), 0.0),
      g_bh(state.b_h.size(), 0.0), g_who(state.w_ho.size(), 0.0),
      g_bo(state.b_o.size(), 0.0), g_start(state.start.size(), 0.0);

  double obj = 0;
  std::vector<double> dh_next(static_cast<size_t>(H), 0.0);
  for (int t = S - 1; t >= 0; --t) {
    const StepCache& c = steps[static_cast<size_t>(t)];
    double coef = std::pow(state.beta, S - 1 - t);
    obj += coef * std::log(c.probs[static_cast<size_t>(actions[static_cast<size_t>(t)])]);

    // d/dlogits of coef * log p[a] = coef * (onehot(a) - p)
    std::vector<double> dh = dh_next;
    for (int o = 0; o < V; ++o) {
      double dl = coef * ((o == actions[static_cast<size_t>(t)] ? 1.0 : 0.0) -
                          c.probs[static_cast<size_t>(o)]);
      g_bo[static_cast<size_t>(o)] += dl;
      for (int i = 0; i < H; ++i) {
        g_who[static_cast<size_t>(o) * H + i] += dl * c.h[static_cast<size_t>(i)];
        dh[static_cast<size_t>(i)] += dl * state.w_ho[static_cast<size_t>(o) * H + i];
      }
    }
    // through tanh
    std::vector<double> dpre(static_cast<size_t>(H));
    for (int i = 0; i < H; ++i)
      dpre[static_cast<size_t>(i)] =
          dh[static_cast<size_t>(i)] *
          (1.0 - c.h[static_cast<size_t>(i)] * c.h[static_cast<size_t>(i)]);

    const std::vector<double>* h_prev =
        t > 0 ? &steps[static_cast<size_t>(t - 1)].h : nullptr;
    dh_next.assign(static_cast<size_t>(H), 0.0);
    for (int i = 0; i < H; ++i) {
      double d = dpre[static_cast<size_t>(i)];
      g_bh[static_cast<size_t>(i)] += d;
      for (int j = 0; j < V; ++j)
        g_wxh[static_cast<size_t>(i) * V + j] += d * c.x[static_cast<size_t>(j)];
      for (int j = 0; j < H; ++j) {
        double hp = h_prev ? (*h_prev)[static_cast<size_t>(j)] : 0.0;
        g_whh[static_cast<size_t>(i) * H + j] += d * hp;
        if (h_prev)
          dh_next[static_cast<size_t>(j)] +=
              d * state.w_hh[static_cast<size_t>(i) * H + j];
      }
    }
    if (t == 0)
      for (int j = 0; j < V; ++j) {
        double acc = 0;
        for (int i = 0; i < H; ++i)
          acc += dpre[static_cast<size_t>(i)] * state.w_xh[static_cast<size_t>(i) * V + j];
        g_start[static_cast<size_t>(j)] += acc;
      }
    // inputs at t > 0 are one-hot constants; no gradient flows into them
  }
  if (value) *value = obj;

  std::vector<double> flat;
  flat.reserve(state.param_count());
  for (const auto* vec : {&g_wxh, &g_whh, &g_bh, &g_who, &g_bo, &g_start})
    flat.insert(flat.end(), vec->begin(), vec->end());
  return flat;
}

bool actions_pattern_valid(const std::vector<int>& actions,
                           const PatternLibrary& library) {
  for (size_t i = 0; i < actions.size(); ++i)
    for (size_t j = i + 1; j < actions.size(); ++j) {
      if (actions[i] == actions[j]) return false;
      if (library.band_of(actions[i]) == library.band_of(actions[j])) return false;
    }
  return true;
}

std::string reward_case_name(RewardCase c) {
  switch (c) {
    case RewardCase::Satisfied: return "satisfied";
    case RewardCase::PatternInvalid: return "pattern_invalid";
    case RewardCase::AccuracyPenalty: return "accuracy_penalty";
    case RewardCase::LatencyPenalty: return "latency_penalty";
  }
  return "?";
}

double compute_reward(const EpisodeEval& eval, const RewardConfig& cfg,
                      const std::vector<int>& actions,
                      const PatternLibrary& library, RewardCase* out_case) {
  RewardCase rc;
  double reward;
  if (!actions_pattern_valid(actions, library)) {
    rc = RewardCase::PatternInvalid;
    reward = -cfg.phi_pattern;
  } else if (eval.max_latency < cfg.latency_constraint &&
             eval.min_accuracy > cfg.accuracy_constraint) {
    rc = RewardCase::Satisfied;
    reward = eval.min_accuracy +
             (cfg.latency_constraint - eval.max_latency) / cfg.latency_constraint;
  } else if (eval.max_latency < cfg.latency_constraint) {
    // accuracy violated (or on the boundary), latency fine
    rc = RewardCase::AccuracyPenalty;
    reward = -cfg.phi_accuracy;
  } else {
    rc = RewardCase::LatencyPenalty;
    reward = -cfg.phi_latency;
  }
  if (out_case) *out_case = rc;
  return reward;
}

void policy_gradient_update(ControllerState& state, const Trajectory& trajectory) {
  double advantage = trajectory.reward - state.baseline;
  auto grads = weighted_log_prob_grad(state, trajectory.actions);
  for (double g : grads)
    if (!std::isfinite(g))
      throw std::runtime_error("policy_gradient_update: non-finite gradient");
  auto refs = state.param_refs();
  for (size_t i = 0; i < refs.size(); ++i)
    *refs[i] += state.lr * advantage * grads[i];
  state.baseline = state.baseline_decay * state.baseline +
                   (1.0 - state.baseline_decay) * trajectory.reward;
}

SearchResult search(ControllerState& state, const PatternLibrary& library,
                    const RewardConfig& cfg, const SearchEnv& env, int num_slots,
                    int max_episodes, std::ostream* episode_log) {
  if (episode_log) *episode_log << "episode,action_ids,A,L,reward,case\n";
  SearchResult result;
  for (int ep = 0; ep < max_episodes; ++ep) {
    Trajectory traj = sample_actions(state, num_slots);
    EpisodeEval eval{0.0, 0.0};
    bool valid = actions_pattern_valid(traj.actions, library);
    if (valid) {
      try {
        eval = env(traj.actions);
      } catch (const std::exception& e) {
        throw std::runtime_error("search: environment failed at episode " +
                                 std::to_string(ep) + ": " + e.what());
      }
    }
    traj.reward = compute_reward(eval, cfg, traj.actions, library, &traj.reward_case);
    policy_gradient_update(state, traj);
    result.episodes = ep + 1;
    if (episode_log) {
      *episode_log << ep << ',';
      for (size_t i = 0; i < traj.actions.size(); ++i)
        *episode_log << (i ? ";" : "") << traj.actions[i];
      *episode_log << ',' << eval.min_accuracy << ',' << eval.max_latency << ','
                   << traj.reward << ',' << reward_case_name(traj.reward_case)
                   << '\n';
    }
    if (traj.reward > result.best_reward) {
      result.best_reward = traj.reward;
      result.best_actions = traj.actions;
    }
    if (traj.reward_case == RewardCase::Satisfied) {
      result.satisfied = true;
      result.best_actions = traj.actions;
      result.best_reward = traj.reward;
      return result;
    }
  }
  result.satisfied = false;
  return result;
}

}  // namespace eve
