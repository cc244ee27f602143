#pragma once

// Surrogate-ensemble membership inference: auxiliary-data splitting, shadow
// training, membership dataset, binary member/non-member classifier,
// calibration and end-to-end scoring of a test set.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "miafdr/conformal.hpp"
#include "miafdr/dataset.hpp"
#include "miafdr/error.hpp"
#include "miafdr/fdr.hpp"
#include "miafdr/mlp.hpp"
#include "miafdr/rng.hpp"

namespace miafdr {

/// Hidden widths and activation; input and output widths come from the task.
struct HiddenLayers {
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;

  LayerSpec between(std::size_t in, std::size_t out) const {
    return LayerSpec::with_hidden(in, widths, out, activation);
  }
  bool operator==(const HiddenLayers&) const = default;
};

/// Where the K training subsets are drawn from: D_au1 (default), or all of
/// D_au2 (the variant used in some of the reported experiments).
enum class SubsetSource { au1, au2 };

struct AttackConfig {
  std::size_t K = 8;
  double eta = 0.5;
  LambdaWeight lambda{LambdaWeight::kDefault};
  double alpha = 0.1;
  double split_au1_fraction = 0.3;
  double split_ca_fraction = 0.4;
  HiddenLayers surrogate_arch{{32, 32}, Activation::relu};
  HiddenLayers binary_arch{{16}, Activation::relu};
  TrainConfig surrogate_train{0.1, 300, 16, 0, 0.0};
  TrainConfig binary_train{0.05, 30, 32, 0, 0.0};
  bool blackbox = false;
  SubsetSource subset_source = SubsetSource::au1;
  std::uint64_t seed = 0;

  SignificanceLevel alpha_level() const { return SignificanceLevel(alpha); }

  void validate() const {
    detail::require(K >= 1, "K must be >= 1");
    detail::require(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
    detail::require(split_au1_fraction > 0.0 && split_au1_fraction < 1.0,
                    "split_au1_fraction must lie in (0, 1)");
    detail::require(split_ca_fraction > 0.0 && split_ca_fraction < 1.0,
                    "split_ca_fraction must lie in (0, 1)");
    (void)alpha_level();
    surrogate_train.validate();
    binary_train.validate();
    for (std::size_t w : surrogate_arch.widths) detail::require(w >= 1, "hidden widths must be positive");
    for (std::size_t w : binary_arch.widths) detail::require(w >= 1, "hidden widths must be positive");
  }
};

/// Query-only access to the victim model.
class VictimOracle {
 public:
  virtual ~VictimOracle() = default;
  virtual ScoreVector query(std::span<const double> x) const = 0;
};

namespace detail {

inline void check_score_vector(const ScoreVector& s) {
  require(!s.probs.empty(), "victim returned an empty score vector");
  double sum = 0.0;
  for (double p : s.probs) {
    require(std::isfinite(p) && p >= 0.0 && p <= 1.0, "victim returned a probability outside [0, 1]");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-6, "victim scores do not sum to 1");
}

}  // namespace detail

class ModelVictim final : public VictimOracle {
 public:
  explicit ModelVictim(MlpModel model) : model_(std::move(model)) {}

  ScoreVector query(std::span<const double> x) const override { return predict_softmax(model_, x); }

 private:
  MlpModel model_;
};

/// Replays recorded victim outputs, keyed by the exact feature vector.
class ReplayVictim final : public VictimOracle {
 public:
  void record(std::span<const double> x, ScoreVector output) {
    detail::check_score_vector(output);
    table_[std::vector<double>(x.begin(), x.end())] = std::move(output);
  }

  ScoreVector query(std::span<const double> x) const override {
    auto it = table_.find(std::vector<double>(x.begin(), x.end()));
    if (it == table_.end()) throw Error("victim query failed: no recorded output for input");
    return it->second;
  }

 private:
  std::map<std::vector<double>, ScoreVector> table_;
};

struct AuxSplit {
  LabeledDataset d_au1;
  LabeledDataset d_au2_tr;
  LabeledDataset d_au2_ca;
};

/// Seeded shuffle, then the first round(f1 * N) rows form D_au1; of the
/// remaining N2 rows, round(f_ca * N2) form the calibration part and the rest
/// the membership-training part.
inline AuxSplit split_auxiliary(const LabeledDataset& d_au, const AttackConfig& cfg) {
  cfg.validate();
  d_au.validate();
  const std::size_t n = d_au.size();
  const auto n1 = static_cast<std::size_t>(std::llround(cfg.split_au1_fraction * static_cast<double>(n)));
  const std::size_t n2 = n - std::min(n, n1);
  const auto n_ca = static_cast<std::size_t>(std::llround(cfg.split_ca_fraction * static_cast<double>(n2)));
  const std::size_t n_tr = n2 - std::min(n2, n_ca);
  if (n1 == 0 || n_ca == 0 || n_tr == 0 || n1 > n) {
    throw ContractError("auxiliary split of " + std::to_string(n) + " samples leaves an empty part (" +
                        std::to_string(n1) + "/" + std::to_string(n_tr) + "/" + std::to_string(n_ca) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, stream::kSplit));
  std::shuffle(order.begin(), order.end(), rng);

  const std::span<const std::size_t> all(order);
  AuxSplit split;
  split.d_au1 = d_au.select(all.subspan(0, n1));
  split.d_au2_ca = d_au.select(all.subspan(n1, n_ca));
  split.d_au2_tr = d_au.select(all.subspan(n1 + n_ca, n_tr));
  return split;
}

/// K subsets of floor(eta * |source|) distinct rows each, drawn independently.
inline std::vector<LabeledDataset> sample_subsets(const LabeledDataset& source, std::size_t K,
                                                  double eta, std::uint64_t seed) {
  detail::require(K >= 1, "K must be >= 1");
  detail::require(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
  const auto m = static_cast<std::size_t>(std::floor(eta * static_cast<double>(source.size())));
  if (m == 0) throw ContractError("eta = " + std::to_string(eta) + " yields empty subsets");
  std::vector<LabeledDataset> subsets;
  subsets.reserve(K);
  std::vector<std::size_t> order(source.size());
  for (std::size_t k = 0; k < K; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, stream::kSubset, k));
    // Partial Fisher-Yates: the first m slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    subsets.push_back(source.select(std::span<const std::size_t>(order).subspan(0, m)));
  }
  return subsets;
}

struct SurrogateEnsemble {
  std::vector<MlpModel> models;
  std::vector<std::vector<std::size_t>> subset_ids;

  std::size_t size() const noexcept { return models.size(); }
};

/// One model per subset; model k trains with a seed derived from
/// (base.seed, k), so trainings are independent of execution order.
inline SurrogateEnsemble train_surrogates(std::span<const LabeledDataset> subsets,
                                          const LayerSpec& arch, const TrainConfig& base) {
  detail::require(!subsets.empty(), "no subsets to train surrogates on");
  SurrogateEnsemble ensemble;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    TrainConfig cfg = base;
    cfg.seed = derive_seed(base.seed, stream::kSurrogate, k);
    ensemble.models.push_back(train_classifier(subsets[k], arch, cfg));
    ensemble.subset_ids.push_back(subsets[k].ids);
  }
  return ensemble;
}

/// Softmax vectors labelled 0 (member) or 1 (non-member).
struct MembershipDataset {
  std::vector<ScoreVector> inputs;
  std::vector<int> labels;

  static constexpr int kMember = 0;
  static constexpr int kNonMember = 1;

  std::size_t size() const noexcept { return labels.size(); }

  LabeledDataset to_labeled() const {
    LabeledDataset out;
    out.num_classes = 2;
    out.features = Matrix(0, inputs.empty() ? 0 : inputs.front().size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(inputs[i].probs, labels[i], i);
    return out;
  }
};

namespace detail {

inline std::unordered_map<std::size_t, std::size_t> index_by_id(const LabeledDataset& d) {
  std::unordered_map<std::size_t, std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i) idx.emplace(d.ids[i], i);
  return idx;
}

}  // namespace detail

/// Member rows: every surrogate's outputs on its own training subset.
/// Non-member rows: every surrogate's outputs on every sample of D_au2,tr.
/// `subset_source` is the dataset the subsets were sampled from.
inline MembershipDataset build_membership_dataset(const SurrogateEnsemble& ensemble,
                                                  const LabeledDataset& subset_source,
                                                  const AuxSplit& split) {
  detail::require(!ensemble.models.empty(), "ensemble is empty");
  MembershipDataset me;
  const auto lookup = detail::index_by_id(subset_source);
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    for (std::size_t id : ensemble.subset_ids[k]) {
      auto it = lookup.find(id);
      detail::require(it != lookup.end(), "subset id " + std::to_string(id) + " not in source data");
      me.inputs.push_back(predict_softmax(ensemble.models[k], subset_source.features.row(it->second)));
      me.labels.push_back(MembershipDataset::kMember);
    }
  }
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    for (std::size_t i = 0; i < split.d_au2_tr.size(); ++i) {
      me.inputs.push_back(predict_softmax(ensemble.models[k], split.d_au2_tr.features.row(i)));
      me.labels.push_back(MembershipDataset::kNonMember);
    }
  }
  return me;
}

/// Cross-entropy minimization of the member/non-member classifier.
inline MlpModel train_binary_classifier(const MembershipDataset& me, const HiddenLayers& arch,
                                        const TrainConfig& cfg) {
  detail::require(me.size() > 0, "membership dataset is empty");
  const LabeledDataset data = me.to_labeled();
  return train_classifier(data, arch.between(data.dim(), 2), cfg);
}

/// Binary classifier's probability that `y` is a non-member output.
inline double non_member_probability(const MlpModel& binary, const ScoreVector& y) {
  return predict_softmax(binary, y.probs).probs[MembershipDataset::kNonMember];
}

/// K * |D_au2,ca| conformity scores: each surrogate's output on each
/// calibration sample, scored by the binary classifier.
inline CalibrationScores build_calibration_scores(const SurrogateEnsemble& ensemble,
                                                  const MlpModel& binary, const AuxSplit& split,
                                                  LambdaWeight lambda) {
  detail::require(!ensemble.models.empty(), "ensemble is empty");
  CalibrationScores calib;
  for (const MlpModel& model : ensemble.models) {
    for (std::size_t j = 0; j < split.d_au2_ca.size(); ++j) {
      const ScoreVector y = predict_softmax(model, split.d_au2_ca.features.row(j));
      calib.add(conformity_score(non_member_probability(binary, y), lambda));
    }
  }
  calib.freeze();
  return calib;
}

/// Everything the offline phase produces.
struct PreparedAttack {
  AuxSplit split;
  std::vector<LabeledDataset> subsets;
  SurrogateEnsemble ensemble;
  MembershipDataset membership;
  MlpModel binary;
  CalibrationScores calibration;
  LayerSpec surrogate_spec;
};

/// Split -> subsets -> surrogates -> membership data -> binary classifier ->
/// frozen calibration. Uses only the auxiliary data; the victim is never
/// touched here.
inline PreparedAttack prepare_attack(const LabeledDataset& d_au, const AttackConfig& cfg) {
  cfg.validate();
  PreparedAttack out;
  out.split = split_auxiliary(d_au, cfg);

  LabeledDataset source;
  if (cfg.subset_source == SubsetSource::au1) {
    source = out.split.d_au1;
  } else {
    source = out.split.d_au2_tr;
    for (std::size_t i = 0; i < out.split.d_au2_ca.size(); ++i)
      source.push_back(out.split.d_au2_ca.features.row(i), out.split.d_au2_ca.labels[i],
                       out.split.d_au2_ca.ids[i]);
  }
  out.subsets = sample_subsets(source, cfg.K, cfg.eta, cfg.seed);

  out.surrogate_spec = cfg.surrogate_arch.between(d_au.dim(), static_cast<std::size_t>(d_au.num_classes));
  TrainConfig surrogate_cfg = cfg.surrogate_train;
  surrogate_cfg.seed = derive_seed(cfg.seed, stream::kSurrogate);
  out.ensemble = train_surrogates(out.subsets, out.surrogate_spec, surrogate_cfg);

  out.membership = build_membership_dataset(out.ensemble, source, out.split);
  TrainConfig binary_cfg = cfg.binary_train;
  binary_cfg.seed = derive_seed(cfg.seed, stream::kBinary);
  out.binary = train_binary_classifier(out.membership, cfg.binary_arch, binary_cfg);
  out.calibration = build_calibration_scores(out.ensemble, out.binary, out.split, cfg.lambda);
  return out;
}

struct AttackResult {
  std::vector<double> scores;  // conformity scores, larger = more non-member-like
  PValueVector pvalues;
  AdjustedPValues adjusted;
  DecisionSet decisions;
  std::optional<FdrReport> report;
};

/// Scores every test row through the victim, binary classifier and
/// calibration, then adjusts and thresholds the whole batch.
inline AttackResult run_attack(const VictimOracle& victim, const Matrix& d_ts, LambdaWeight lambda,
                               SignificanceLevel alpha, const CalibrationScores& calib,
                               const MlpModel& binary,
                               std::optional<std::span<const Membership>> truth = std::nullopt) {
  detail::require(d_ts.rows() > 0, "test set is empty");
  calib.require_frozen();
  AttackResult r;
  r.scores.reserve(d_ts.rows());
  for (std::size_t t = 0; t < d_ts.rows(); ++t) {
    const ScoreVector y = victim.query(d_ts.row(t));
    detail::check_score_vector(y);
    detail::require(y.size() == binary.input_dim(), "victim output width does not match the binary classifier");
    r.scores.push_back(conformity_score(non_member_probability(binary, y), lambda));
  }
  r.pvalues = batch_pvalues(calib, r.scores);
  r.adjusted = bh_adjust(r.pvalues);
  r.decisions = decide(r.adjusted, alpha);
  if (truth) r.report = compute_fdr(r.decisions, *truth);
  return r;
}

inline nlohmann::json make_manifest(const AttackConfig& cfg, const AuxSplit& split) {
  return {{"seed", cfg.seed},
          {"K", cfg.K},
          {"eta", cfg.eta},
          {"lambda", cfg.lambda.value()},
          {"alpha", cfg.alpha},
          {"blackbox", cfg.blackbox},
          {"subset_source", cfg.subset_source == SubsetSource::au1 ? "au1" : "au2"},
          {"split_au1_fraction", cfg.split_au1_fraction},
          {"split_ca_fraction", cfg.split_ca_fraction},
          {"n_au1", split.d_au1.size()},
          {"n_au2_tr", split.d_au2_tr.size()},
          {"n_au2_ca", split.d_au2_ca.size()}};
}

// Config files: one `key = value` per line, `#` starts a comment. Unknown
// keys are rejected. Keys not present keep their defaults.
//
//   K, eta, lambda, alpha, split_au1_fraction, split_ca_fraction, seed,
//   blackbox (true/false), subset_source (au1/au2),
//   surrogate_hidden (comma list), surrogate_activation (relu/tanh),
//   surrogate_lr, surrogate_epochs, surrogate_batch, surrogate_l2,
//   binary_hidden, binary_activation, binary_lr, binary_epochs,
//   binary_batch, binary_l2
//
// `KeyValueConfig` is shared with the task settings of the CLI; consumers
// take() the keys they own and the remainder is reported as unknown.

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string text = trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
      std::string key = trim(text.substr(0, eq));
      std::string value = trim(text.substr(eq + 1));
      if (key.empty()) throw ParseError(line_no, "empty key");
      cfg.entries_[key] = {value, line_no};
    }
    return cfg;
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    std::string v = it->second.value;
    entries_.erase(it);
    return v;
  }

  template <typename T>
  void take_into(const std::string& key, T& dst) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return;
    const auto [value, line] = it->second;
    entries_.erase(it);
    try {
      dst = convert<T>(value);
    } catch (const ContractError& e) {
      throw ContractError("config key '" + key + "' (line " + std::to_string(line) + "): " + e.what());
    }
  }

  void reject_unknown() const {
    if (entries_.empty()) return;
    const auto& [key, entry] = *entries_.begin();
    throw ContractError("unknown config key '" + key + "' at line " + std::to_string(entry.line));
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <typename T>
  static T convert(const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ContractError("expected true/false, got '" + v + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      double d = 0.0;
      if (!detail::parse_double(v, d) || !std::isfinite(d)) throw ContractError("expected a number, got '" + v + "'");
      return d;
    } else if constexpr (std::is_integral_v<T>) {
      T out{};
      auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ContractError("expected a non-negative integer, got '" + v + "'");
      return out;
    } else if constexpr (std::is_same_v<T, Activation>) {
      return parse_activation(v);
    } else if constexpr (std::is_same_v<T, LambdaWeight>) {
      return LambdaWeight(convert<double>(v));
    } else if constexpr (std::is_same_v<T, SubsetSource>) {
      if (v == "au1") return SubsetSource::au1;
      if (v == "au2") return SubsetSource::au2;
      throw ContractError("subset_source must be au1 or au2, got '" + v + "'");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      std::vector<std::size_t> widths;
      std::stringstream ss(v);
      for (std::string part; std::getline(ss, part, ',');) {
        part = trim(part);
        if (part.empty()) continue;
        widths.push_back(convert<std::size_t>(part));
      }
      return widths;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config value type");
    }
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  std::map<std::string, Entry> entries_;
};

/// Applies the attack keys found in `kv` on top of `cfg` (removing them).
inline void apply_attack_config(KeyValueConfig& kv, AttackConfig& cfg) {
  kv.take_into("K", cfg.K);
  kv.take_into("eta", cfg.eta);
  kv.take_into("lambda", cfg.lambda);
  kv.take_into("alpha", cfg.alpha);
  kv.take_into("split_au1_fraction", cfg.split_au1_fraction);
  kv.take_into("split_ca_fraction", cfg.split_ca_fraction);
  kv.take_into("seed", cfg.seed);
  kv.take_into("blackbox", cfg.blackbox);
  kv.take_into("subset_source", cfg.subset_source);
  kv.take_into("surrogate_hidden", cfg.surrogate_arch.widths);
  kv.take_into("surrogate_activation", cfg.surrogate_arch.activation);
  kv.take_into("surrogate_lr", cfg.surrogate_train.learning_rate);
  kv.take_into("surrogate_epochs", cfg.surrogate_train.epochs);
  kv.take_into("surrogate_batch", cfg.surrogate_train.batch_size);
  kv.take_into("surrogate_l2", cfg.surrogate_train.l2_penalty);
  kv.take_into("binary_hidden", cfg.binary_arch.widths);
  kv.take_into("binary_activation", cfg.binary_arch.activation);
  kv.take_into("binary_lr", cfg.binary_train.learning_rate);
  kv.take_into("binary_epochs", cfg.binary_train.epochs);
  kv.take_into("binary_batch", cfg.binary_train.batch_size);
  kv.take_into("binary_l2", cfg.binary_train.l2_penalty);
}

inline AttackConfig load_attack_config(std::istream& is) {
  KeyValueConfig kv = KeyValueConfig::parse(is);
  AttackConfig cfg;
  apply_attack_config(kv, cfg);
  kv.reject_unknown();
  cfg.validate();
  return cfg;
}

}  // namespace miafdr
