#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/nn.hpp"
#include "eve/patterns.hpp"

namespace eve {

/// Monotone per-model kept-set schedule. Model 0 is the highest-sparsity
/// model; full mask of model k+1 contains full mask of model k by
/// construction (the previous mask is OR-ed in).
struct MaskSchedule {
  NetworkDef def;
  std::vector<std::vector<Tensor>> full_masks;  // [model][layer]
  std::vector<std::vector<Tensor>> increments;  // [model][layer]; increments[0] == full_masks[0]

  int num_models() const { return static_cast<int>(full_masks.size()); }
};

struct TrainHyper {
  int epochs = 5;
  float lr = 0.25f;
  int batch_size = 16;
  uint64_t seed = 1;
};

struct ModelReport {
  double sparsity = 0;        // pruned fraction over prunable weights
  double accuracy = 0;
  std::vector<double> epoch_losses;
};

struct SharedTrainingReport {
  std::vector<ModelReport> models;
  bool sharing_verified = false;

  std::string to_csv() const;  // model_index,sparsity,accuracy columns
};

MaskSchedule build_mask_schedule(const NetworkDef& def,
                                 const std::vector<ModelAssignment>& assignments,
                                 const PatternLibrary& library);

/// Sequential shared-weight training: model 0 from the seeded initial
/// weights under its mask; model k>0 starts from model k-1 with the new
/// increment positions seeded from the initial weights and every previously
/// kept position frozen. Shared positions end bit-identical across models.
std::vector<TrainedModel> train_shared_sequence(const MaskSchedule& schedule,
                                                const Dataset& data,
                                                const TrainHyper& hyper,
                                                SharedTrainingReport* report = nullptr);

/// True iff every pair of models agrees bit-exactly on the intersection of
/// their kept sets.
bool verify_sharing(const std::vector<TrainedModel>& models,
                    const MaskSchedule& schedule);

/// Weights that must be written when switching from one resident model to
/// another under the shared-weight guarantee: |kept(to) \ kept(from)|.
long switching_write_cost(const MaskSchedule& schedule, int from, int to);

/// Prunable-weight sparsity of one mask set (pruned / total).
double mask_sparsity(const NetworkDef& def, const std::vector<Tensor>& masks);

}  // namespace eve
