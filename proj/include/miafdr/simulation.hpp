#pragma once

// Desk-scale victim simulation on the two-Gaussian task: an owner trains a
// victim on private data, the attacker holds a disjoint auxiliary sample, and
// the test set mixes the victim's training rows with fresh non-members.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "miafdr/attack.hpp"
#include "miafdr/dataset.hpp"
#include "miafdr/metrics.hpp"
#include "miafdr/mlp.hpp"

namespace miafdr {

struct TaskConfig {
  std::size_t n_aux = 2000;
  std::size_t n_victim_train = 200;
  std::size_t n_test_non_members = 200;
  std::size_t dim = 2;
  double mean_offset = 1.5;
  HiddenLayers victim_arch{{32, 32}, Activation::relu};
  TrainConfig victim_train{0.1, 500, 16, 0, 0.0};
  // The victim is retrained with doubled epochs until its training accuracy
  // reaches this level or the epoch count would exceed victim_max_epochs.
  // 0 disables the escalation.
  double victim_target_accuracy = 0.99;
  std::size_t victim_max_epochs = 4000;

  void validate() const {
    detail::require(n_aux >= 3 && n_victim_train >= 1 && n_test_non_members >= 1, "task counts too small");
    detail::require(dim >= 1, "task dimension must be >= 1");
    detail::require(victim_target_accuracy >= 0.0 && victim_target_accuracy <= 1.0,
                    "victim_target_accuracy must lie in [0, 1]");
    victim_train.validate();
  }
};

/// Applies the `task_*` / `victim_*` keys in `kv` on top of `task`.
inline void apply_task_config(KeyValueConfig& kv, TaskConfig& task) {
  kv.take_into("task_n_aux", task.n_aux);
  kv.take_into("task_n_victim_train", task.n_victim_train);
  kv.take_into("task_n_test_non_members", task.n_test_non_members);
  kv.take_into("task_dim", task.dim);
  kv.take_into("task_mean_offset", task.mean_offset);
  kv.take_into("victim_hidden", task.victim_arch.widths);
  kv.take_into("victim_activation", task.victim_arch.activation);
  kv.take_into("victim_lr", task.victim_train.learning_rate);
  kv.take_into("victim_epochs", task.victim_train.epochs);
  kv.take_into("victim_batch", task.victim_train.batch_size);
  kv.take_into("victim_l2", task.victim_train.l2_penalty);
  kv.take_into("victim_target_accuracy", task.victim_target_accuracy);
  kv.take_into("victim_max_epochs", task.victim_max_epochs);
}

struct SimulationResult {
  AttackResult attack;
  std::vector<Membership> truth;
  double victim_train_accuracy = 0.0;
  std::size_t victim_epochs = 0;
  double auroc = 0.0;
  nlohmann::json manifest;
};

/// In grey-box mode the surrogates reuse the victim's architecture and
/// training recipe. In black-box mode `cfg.surrogate_arch` is used and must
/// differ from the victim's.
inline AttackConfig effective_attack_config(const TaskConfig& task, AttackConfig cfg) {
  if (cfg.blackbox) {
    detail::require(!(cfg.surrogate_arch == task.victim_arch),
                    "black-box mode needs a surrogate architecture different from the victim's");
  } else {
    cfg.surrogate_arch = task.victim_arch;
    cfg.surrogate_train = task.victim_train;
  }
  return cfg;
}

/// Trains the victim, escalating epochs per `task.victim_target_accuracy`.
/// Returns the model and the epoch count it was trained with.
inline std::pair<MlpModel, std::size_t> train_victim(const TaskConfig& task, const LabeledDataset& d_tr,
                                                     std::uint64_t seed) {
  TrainConfig cfg = task.victim_train;
  cfg.seed = seed;
  const LayerSpec arch = task.victim_arch.between(task.dim, 2);
  MlpModel model = train_classifier(d_tr, arch, cfg);
  while (task.victim_target_accuracy > 0.0 && accuracy(model, d_tr) < task.victim_target_accuracy &&
         cfg.epochs > 0 && 2 * cfg.epochs <= task.victim_max_epochs) {
    cfg.epochs *= 2;
    model = train_classifier(d_tr, arch, cfg);
  }
  return {std::move(model), cfg.epochs};
}

inline SimulationResult run_simulated_attack(const TaskConfig& task, const AttackConfig& base) {
  task.validate();
  base.validate();

  const std::uint64_t data_seed = derive_seed(base.seed, stream::kData);
  const LabeledDataset d_tr =
      make_two_gaussians(task.n_victim_train, task.dim, task.mean_offset, derive_seed(data_seed, 0), 0);
  const LabeledDataset d_au = make_two_gaussians(task.n_aux, task.dim, task.mean_offset,
                                                 derive_seed(data_seed, 1), task.n_victim_train);
  const LabeledDataset fresh =
      make_two_gaussians(task.n_test_non_members, task.dim, task.mean_offset, derive_seed(data_seed, 2),
                         task.n_victim_train + task.n_aux);

  auto [victim_model, victim_epochs] = train_victim(task, d_tr, derive_seed(base.seed, stream::kVictim));
  TaskConfig used = task;
  used.victim_train.epochs = victim_epochs;
  const AttackConfig cfg = effective_attack_config(used, base);
  cfg.validate();

  const PreparedAttack prepared = prepare_attack(d_au, cfg);

  Matrix d_ts(0, task.dim);
  SimulationResult out;
  for (std::size_t i = 0; i < d_tr.size(); ++i) {
    d_ts.append_row(d_tr.features.row(i));
    out.truth.push_back(Membership::member);
  }
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    d_ts.append_row(fresh.features.row(i));
    out.truth.push_back(Membership::non_member);
  }

  const ModelVictim victim(victim_model);
  out.attack = run_attack(victim, d_ts, cfg.lambda, cfg.alpha_level(), prepared.calibration,
                          prepared.binary, std::span<const Membership>(out.truth));
  out.victim_train_accuracy = accuracy(victim_model, d_tr);
  out.victim_epochs = victim_epochs;
  out.auroc = auroc(member_scores(out.attack.scores), out.truth);
  out.manifest = make_manifest(cfg, prepared.split);
  out.manifest["n_test"] = d_ts.rows();
  out.manifest["victim_train_accuracy"] = out.victim_train_accuracy;
  out.manifest["victim_epochs"] = victim_epochs;
  return out;
}

}  // namespace miafdr
