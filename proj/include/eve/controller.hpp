#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "eve/patterns.hpp"

namespace eve {

/// One-layer recurrent policy: x_0 is a learned start vector, subsequent
/// inputs are one-hot encodings of the previous action;
/// h_t = tanh(Wxh x + Whh h + bh), logits = Who h + bo, softmax over the
/// pattern library. All parameters in double so gradients survive a
/// finite-difference check.
struct ControllerState {
  int vocab = 0;
  int hidden = 35;
  std::vector<double> w_xh, w_hh, b_h;  // hidden x vocab, hidden x hidden, hidden
  std::vector<double> w_ho, b_o;        // vocab x hidden, vocab
  std::vector<double> start;            // vocab
  double baseline = 0;                  // exponential moving average of rewards
  double baseline_decay = 0.9;
  double beta = 0.9;                    // per-step reward discount factor
  double lr = 5e-3;
  std::mt19937_64 rng;

  static ControllerState init(int vocab, uint64_t seed, int hidden = 35);
  size_t param_count() const;
  /// Flat view of all parameters in a fixed order (for tests).
  std::vector<double*> param_refs();
};

enum class RewardCase { Satisfied, PatternInvalid, AccuracyPenalty, LatencyPenalty };

std::string reward_case_name(RewardCase c);

struct RewardConfig {
  double latency_constraint = 1.0;   // L_C seconds
  double accuracy_constraint = 0.9;  // A_C fraction
  double phi_pattern = 1.0;
  double phi_accuracy = 1.0;
  double phi_latency = 1.0;
};

struct EpisodeEval {
  double min_accuracy = 0;  // lowest accuracy over the N models
  double max_latency = 0;   // largest predicted latency over the N models
};

struct Trajectory {
  std::vector<int> actions;
  std::vector<double> log_probs;
  double reward = 0;
  RewardCase reward_case = RewardCase::Satisfied;
};

Trajectory sample_actions(ControllerState& state, int num_slots);

/// Per-slot softmax probabilities and the discounted log-prob objective
/// sum_s beta^{S-s} log pi(a_s), teacher-forced on the given actions.
double weighted_log_prob(const ControllerState& state,
                         const std::vector<int>& actions);

/// Gradient of weighted_log_prob w.r.t. every parameter, in param_refs order.
std::vector<double> weighted_log_prob_grad(const ControllerState& state,
                                           const std::vector<int>& actions,
                                           double* value = nullptr);

/// Pattern constraint: invalid when two slots pick the same pattern id or
/// two picks land in the same sparsity band.
bool actions_pattern_valid(const std::vector<int>& actions,
                           const PatternLibrary& library);

double compute_reward(const EpisodeEval& eval, const RewardConfig& cfg,
                      const std::vector<int>& actions,
                      const PatternLibrary& library, RewardCase* out_case = nullptr);

/// REINFORCE update with batch size 1 and the EMA baseline; the baseline is
/// refreshed from the trajectory reward after the gradient step.
void policy_gradient_update(ControllerState& state, const Trajectory& trajectory);

using SearchEnv = std::function<EpisodeEval(const std::vector<int>& actions)>;

struct SearchResult {
  std::vector<int> best_actions;
  double best_reward = -std::numeric_limits<double>::infinity();
  bool satisfied = false;
  int episodes = 0;
};

/// RL loop: sample N pattern ids per episode, score via env, reward per the
/// constraint cases, update the policy. Returns on the first
/// constraint-satisfying candidate, or the best-reward candidate after
/// max_episodes. episode_log, when set, receives
/// `episode,action_ids,A,L,reward,case` CSV rows.
SearchResult search(ControllerState& state, const PatternLibrary& library,
                    const RewardConfig& cfg, const SearchEnv& env, int num_slots,
                    int max_episodes = 300, std::ostream* episode_log = nullptr);

}  // namespace eve
