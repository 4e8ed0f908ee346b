#include "eve/shared_training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace eve {

MaskSchedule build_mask_schedule(const NetworkDef& def,
                                 const std::vector<ModelAssignment>& assignments,
                                 const PatternLibrary& library) {
  if (assignments.empty())
    throw std::runtime_error("build_mask_schedule: no assignments");
  MaskSchedule sched;
  sched.def = def;
  std::vector<Tensor> prev;
  for (size_t k = 0; k < assignments.size(); ++k) {
    auto masks = assignment_masks(def, assignments[k], library);
    std::vector<Tensor> full = masks, inc = masks;
    if (k > 0) {
      for (size_t li = 0; li < full.size(); ++li) {
        if (full[li].empty()) continue;
        for (size_t i = 0; i < full[li].data.size(); ++i) {
          if (prev[li][i] != 0.0f) full[li][i] = 1.0f;  // monotone growth
          inc[li][i] = (full[li][i] != 0.0f && prev[li][i] == 0.0f) ? 1.0f : 0.0f;
        }
      }
    }
    prev = full;
    sched.full_masks.push_back(std::move(full));
    sched.increments.push_back(std::move(inc));
  }
  return sched;
}

double mask_sparsity(const NetworkDef& def, const std::vector<Tensor>& masks) {
  long total = 0, kept = 0;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    if (!layer_prunable(def.layers[li]) || masks[li].empty()) continue;
    total += masks[li].size();
    for (float v : masks[li].data) kept += v != 0.0f ? 1 : 0;
  }
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(kept) / static_cast<double>(total);
}

namespace {

TrainedModel train_one(TrainedModel model, const std::vector<Tensor>& frozen,
                       const Dataset& data, const TrainHyper& hyper,
                       std::mt19937_64& rng, ModelReport* report) {
  std::vector<size_t> order(data.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(hyper.batch_size)) {
      std::vector<Sample> batch;
      for (size_t i = start;
           i < std::min(order.size(), start + static_cast<size_t>(hyper.batch_size)); ++i)
        batch.push_back(data.train[order[i]]);
      double loss;
      try {
        Grads grads;
        std::tie(loss, grads) = loss_and_grads(model, batch);
        if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss");
        model = sgd_step_masked(model, grads, hyper.lr, frozen);
        for (const Tensor& w : model.weights)
          if (!w.all_finite()) throw std::runtime_error("non-finite weights");
      } catch (const std::exception& e) {
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + ": " + e.what());
      }
      epoch_loss += loss;
      ++batches;
    }
    if (report) report->epoch_losses.push_back(epoch_loss / std::max(1, batches));
  }
  return model;
}

}  // namespace

std::vector<TrainedModel> train_shared_sequence(const MaskSchedule& schedule,
                                                const Dataset& data,
                                                const TrainHyper& hyper,
                                                SharedTrainingReport* report) {
  const int n = schedule.num_models();
  if (n < 1) throw std::runtime_error("train_shared_sequence: empty schedule");
  TrainedModel initial = init_model(schedule.def, hyper.seed);
  std::mt19937_64 rng(hyper.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<TrainedModel> models;
  if (report) report->models.clear();
  for (int k = 0; k < n; ++k) {
    TrainedModel model;
    if (k == 0) {
      model = initial;
      model.masks = schedule.full_masks[0];
      for (size_t li = 0; li < model.weights.size(); ++li)
        if (!model.masks[li].empty())
          for (size_t i = 0; i < model.weights[li].data.size(); ++i)
            if (model.masks[li][i] == 0.0f) model.weights[li][i] = 0.0f;
    } else {
      model = models.back();
      model.masks = schedule.full_masks[static_cast<size_t>(k)];
      // seed the new increment positions from the shared initial weights
      for (size_t li = 0; li < model.weights.size(); ++li) {
        const Tensor& inc = schedule.increments[static_cast<size_t>(k)][li];
        if (inc.empty()) continue;
        for (size_t i = 0; i < model.weights[li].data.size(); ++i)
          if (inc[i] != 0.0f) model.weights[li][i] = initial.weights[li][i];
      }
    }
    const std::vector<Tensor> no_frozen;
    const std::vector<Tensor>& frozen =
        k == 0 ? no_frozen : schedule.full_masks[static_cast<size_t>(k - 1)];
    ModelReport mr;
    model = train_one(std::move(model), frozen, data, hyper,
                      rng, report ? &mr : nullptr);
    if (report) {
      mr.sparsity = mask_sparsity(schedule.def, model.masks);
      mr.accuracy = evaluate_accuracy(model, data.holdout);
      report->models.push_back(std::move(mr));
    }
    models.push_back(std::move(model));
  }
  if (report) report->sharing_verified = verify_sharing(models, schedule);
  return models;
}

bool verify_sharing(const std::vector<TrainedModel>& models,
                    const MaskSchedule& schedule) {
  if (models.size() != static_cast<size_t>(schedule.num_models()))
    throw std::runtime_error("verify_sharing: model count != schedule length");
  for (size_t i = 0; i < models.size(); ++i)
    for (size_t j = i + 1; j < models.size(); ++j)
      for (size_t li = 0; li < models[i].weights.size(); ++li) {
        const Tensor& mi = schedule.full_masks[i][li];
        const Tensor& mj = schedule.full_masks[j][li];
        if (mi.empty()) continue;
        for (size_t p = 0; p < mi.data.size(); ++p)
          if (mi[p] != 0.0f && mj[p] != 0.0f &&
              models[i].weights[li][p] != models[j].weights[li][p])
            return false;
      }
  return true;
}

long switching_write_cost(const MaskSchedule& schedule, int from, int to) {
  if (from < 0 || to < 0 || from >= schedule.num_models() ||
      to >= schedule.num_models())
    throw std::out_of_range("switching_write_cost: model index out of range");
  long count = 0;
  for (size_t li = 0; li < schedule.full_masks[static_cast<size_t>(to)].size(); ++li) {
    const Tensor& mt = schedule.full_masks[static_cast<size_t>(to)][li];
    const Tensor& mf = schedule.full_masks[static_cast<size_t>(from)][li];
    if (mt.empty()) continue;
    for (size_t i = 0; i < mt.data.size(); ++i)
      if (mt[i] != 0.0f && mf[i] == 0.0f) ++count;
  }
  return count;
}

std::string SharedTrainingReport::to_csv() const {
  std::ostringstream out;
  out << "model_index,sparsity,accuracy\n";
  for (size_t i = 0; i < models.size(); ++i)
    out << i << ',' << models[i].sparsity << ',' << models[i].accuracy << '\n';
  return out.str();
}

}  // namespace eve
