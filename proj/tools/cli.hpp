#pragma once

// Command-line front end. `run_cli` is separate from main() so tests can
// drive it in-process.
//
// Exit codes: 0 success, 1 usage error or unknown subcommand, 2 unreadable
// or malformed input, 3 contract or config violation, 4 other failures.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "miafdr/miafdr.hpp"

namespace miafdr::cli {

inline constexpr const char* kSeedEnv = "MIAFDR_SEED";

struct GlobalOptions {
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::string config_path;
};

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ContractError(std::string(kSeedEnv) + " is not an unsigned integer");
    }
  }
  return 0;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_roc_csv(const std::vector<RocPoint>& roc, std::ostream& os) {
  os << "threshold,fpr,tpr\n";
  for (const RocPoint& p : roc)
    os << miafdr::detail::format_double(p.threshold) << ',' << miafdr::detail::format_double(p.fpr) << ','
       << miafdr::detail::format_double(p.tpr) << '\n';
}

inline void print_metrics(const AttackMetrics& m, std::ostream& out) {
  out << "auroc " << m.auroc << "  accuracy " << m.accuracy;
  for (std::size_t i = 0; i < kFprGrid.size(); ++i) out << "  tpr@fpr=" << kFprGrid[i] << ' ' << m.tpr_at_fpr[i];
  out << '\n';
}

inline void print_report(const FdrReport& r, std::ostream& out) {
  out << "rejected " << r.n_rejected << '/' << r.n_tests << "  fdr " << r.fdr << "  (fp " << r.n_false_positive
      << ", tp " << r.n_true_positive << ")  pi0 " << r.pi0 << "  bound alpha*pi0 " << r.bound << '\n';
}

inline void print_curve(const GuaranteeCurve& c, std::string_view label, std::ostream& out) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << "alpha " << std::setw(5) << c.alphas[i] << "  " << label << ' ' << std::setw(10) << c.rates[i]
        << "  stderr " << std::setw(10) << c.stderrs[i] << "  bound " << c.bounds[i]
        << (c.rates[i] <= c.alphas[i] + 3.0 * c.stderrs[i] ? "  ok" : "  EXCEEDS alpha+3se") << '\n';
  }
}

inline std::string to_csv(const GuaranteeCurve& c) {
  std::ostringstream ss;
  write_curve_csv(c, ss);
  return ss.str();
}

}  // namespace detail

inline int run_attack_command(const GlobalOptions& g, bool seed_given, bool alpha_given,
                              const std::filesystem::path& out_dir, std::ostream& out) {
  AttackConfig cfg;
  TaskConfig task;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw IoError("cannot open config '" + g.config_path + "'");
    KeyValueConfig kv = KeyValueConfig::parse(in);
    apply_attack_config(kv, cfg);
    apply_task_config(kv, task);
    kv.reject_unknown();
  }
  if (seed_given || g.config_path.empty()) cfg.seed = g.seed;
  if (alpha_given) cfg.alpha = g.alpha;
  cfg.validate();

  const SimulationResult sim = run_simulated_attack(task, cfg);
  const AttackResult& r = sim.attack;

  std::filesystem::create_directories(out_dir);
  detail::write_text(out_dir / "manifest.json", sim.manifest.dump(2) + "\n");
  detail::write_text(out_dir / "report.json", nlohmann::json(*r.report).dump(2) + "\n");

  WrapResult verdicts;
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    verdicts.sample_ids.push_back("t" + std::to_string(i));
    verdicts.truth.emplace_back(sim.truth[i]);
  }
  verdicts.pvalues = r.pvalues;
  verdicts.adjusted = r.adjusted;
  verdicts.decisions = r.decisions;
  std::ostringstream vs;
  write_verdicts_csv(verdicts, vs);
  detail::write_text(out_dir / "verdicts.csv", vs.str());

  const AttackMetrics m = compute_metrics(member_scores(r.pvalues.values), sim.truth, -r.decisions.alpha);
  std::ostringstream roc;
  detail::write_roc_csv(m.roc, roc);
  detail::write_text(out_dir / "roc.csv", roc.str());

  out << "attack: K " << cfg.K << "  eta " << cfg.eta << "  lambda " << cfg.lambda.value() << "  alpha "
      << cfg.alpha << "  seed " << cfg.seed << (cfg.blackbox ? "  (black-box)" : "  (grey-box)") << '\n';
  out << "victim train accuracy " << sim.victim_train_accuracy << "  conformity-score auroc " << sim.auroc << '\n';
  detail::print_report(*r.report, out);
  detail::print_metrics(m, out);
  out << "wrote " << (out_dir / "report.json").string() << ", verdicts.csv, roc.csv, manifest.json\n";
  return 0;
}

inline int run_wrap_command(const GlobalOptions& g, const std::string& input, const std::string& format,
                            const std::filesystem::path& out_dir, std::ostream& out) {
  ScoreFormat fmt = format_from_path(input);
  if (format == "csv") fmt = ScoreFormat::csv;
  if (format == "jsonl") fmt = ScoreFormat::jsonl;
  const ScoreFile file = import_scores(input, fmt);
  const WrapResult r = wrap_external(file, SignificanceLevel(g.alpha));
  std::filesystem::create_directories(out_dir);
  export_report(r, out_dir / "report.json", out_dir / "verdicts.csv");
  out << "wrap: " << r.sample_ids.size() << " test records, alpha " << g.alpha << ", rejected "
      << r.decisions.rejected.size() << '\n';
  if (r.report) detail::print_report(*r.report, out);
  out << "wrote " << (out_dir / "report.json").string() << " and " << (out_dir / "verdicts.csv").string() << '\n';
  return 0;
}

inline int run_metrics_command(const GlobalOptions& g, const std::string& input,
                               const std::filesystem::path& roc_path, std::ostream& out) {
  std::ifstream in(input);
  if (!in) throw IoError("cannot open '" + input + "'");
  std::string first;
  std::getline(in, first);
  in.seekg(0);

  // Either way the ranking statistic is the negated raw p-value and
  // accuracy is that of the rule p <= alpha.
  std::vector<double> pvalues;
  std::vector<Membership> truth;
  if (first.rfind("sample_id,p_value", 0) == 0) {
    for (const VerdictRow& row : read_verdicts_csv(in)) {
      if (!row.truth) throw ContractError("verdict row '" + row.sample_id + "' has no truth label");
      pvalues.push_back(row.p_value);
      truth.push_back(*row.truth);
    }
  } else {
    const WrapResult r = wrap_external(import_scores(input, format_from_path(input)), SignificanceLevel(g.alpha));
    for (std::size_t i = 0; i < r.truth.size(); ++i) {
      if (!r.truth[i]) throw ContractError("test record '" + r.sample_ids[i] + "' has no truth label");
      truth.push_back(*r.truth[i]);
    }
    pvalues = r.pvalues.values;
  }
  const AttackMetrics m = compute_metrics(member_scores(pvalues), truth, -g.alpha);
  std::ostringstream roc;
  detail::write_roc_csv(m.roc, roc);
  detail::write_text(roc_path, roc.str());
  detail::print_metrics(m, out);
  out << "wrote " << roc_path.string() << '\n';
  return 0;
}

inline int run_gen_command(SyntheticSpec spec, const std::string& path, std::ostream& out) {
  spec.validate();
  const SyntheticDraw draw = generate_synthetic(spec);
  ScoreFile file;
  file.orientation = Orientation::higher_is_non_member;
  for (std::size_t i = 0; i < draw.calibration.size(); ++i)
    file.records.push_back({"c" + std::to_string(i), draw.calibration[i], draw.calibration[i],
                            Membership::non_member, Role::calibration});
  for (std::size_t i = 0; i < draw.test.size(); ++i)
    file.records.push_back({"t" + std::to_string(i), draw.test[i], draw.test[i], draw.truth[i], Role::test});
  std::ostringstream ss;
  if (format_from_path(path) == ScoreFormat::jsonl)
    write_scores_jsonl(file, ss);
  else
    write_scores_csv(file, ss);
  detail::write_text(path, ss.str());
  out << "gen-synthetic: " << draw.calibration.size() << " calibration + " << draw.test.size()
      << " test records (pi0 " << spec.pi0 << ", shift " << spec.member_shift << ") -> " << path << '\n';
  return 0;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"miafdr: membership inference with false-discovery-rate control"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  try {
    g.seed = default_seed();
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  auto* seed_opt = app.add_option("--seed", g.seed, std::string("master seed (default: $") + kSeedEnv + " or 0)");
  auto* alpha_opt = app.add_option("--alpha", g.alpha, "significance level in (0, 1)");
  app.add_option("--config", g.config_path, "key = value config file (attack)");

  std::string out_dir = ".";
  auto* attack = app.add_subcommand("attack", "full surrogate-ensemble attack on the simulated task");
  attack->add_option("--out-dir", out_dir, "output directory");

  std::string input, format = "auto";
  auto* wrap = app.add_subcommand("wrap", "apply conformal + FDR layers to external attack scores");
  wrap->add_option("--input", input, "score file (.csv or .jsonl)")->required();
  wrap->add_option("--format", format, "csv | jsonl | auto")->check(CLI::IsMember({"csv", "jsonl", "auto"}));
  wrap->add_option("--out-dir", out_dir, "output directory");

  SyntheticSpec t1;
  t1.n_calibration = 200;
  t1.n_test = 1;
  t1.pi0 = 1.0;
  t1.n_trials = 10000;
  std::string t1_out = "t1_curve.csv";
  auto* v1 = app.add_subcommand("validate-t1", "empirical P(p <= alpha) for true non-members");
  v1->add_option("--n-calibration", t1.n_calibration);
  v1->add_option("--n-test", t1.n_test, "test points per trial");
  v1->add_option("--trials", t1.n_trials);
  v1->add_option("--out", t1_out, "curve CSV path");

  SyntheticSpec t2;
  std::string t2_out = "t2_curve.csv";
  auto* v2 = app.add_subcommand("validate-t2", "mean realized FDR of the adjusted decisions");
  v2->add_option("--pi0", t2.pi0);
  v2->add_option("--shift", t2.member_shift, "member score shift");
  v2->add_option("--n-calibration", t2.n_calibration);
  v2->add_option("--n-test", t2.n_test);
  v2->add_option("--trials", t2.n_trials);
  v2->add_option("--out", t2_out, "curve CSV path");

  std::string roc_out = "roc.csv";
  auto* metrics = app.add_subcommand("metrics", "AUROC / ROC / TPR@FPR from verdicts or a score file");
  metrics->add_option("--input", input, "verdicts.csv or score file")->required();
  metrics->add_option("--roc-out", roc_out);

  SyntheticSpec gen;
  gen.n_trials = 1;
  std::string gen_out = "synthetic_scores.csv";
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic score file");
  gen_cmd->add_option("--pi0", gen.pi0);
  gen_cmd->add_option("--shift", gen.member_shift);
  gen_cmd->add_option("--n-calibration", gen.n_calibration);
  gen_cmd->add_option("--n-test", gen.n_test);
  gen_cmd->add_option("--out", gen_out);

  if (argc <= 1) {
    out << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const bool seed_given = seed_opt->count() > 0;
    if (alpha_opt->count() > 0 || !attack->parsed()) (void)SignificanceLevel(g.alpha);
    if (attack->parsed()) return run_attack_command(g, seed_given, alpha_opt->count() > 0, out_dir, out);
    if (wrap->parsed()) return run_wrap_command(g, input, format, out_dir, out);
    if (metrics->parsed()) return run_metrics_command(g, input, roc_out, out);
    if (v1->parsed()) {
      t1.seed = g.seed;
      const GuaranteeCurve c = pvalue_validity_experiment(t1, default_t1_alphas());
      detail::write_text(t1_out, detail::to_csv(c));
      out << "validate-t1: " << t1.n_trials << " trials x " << t1.n_test << " null test points, |calibration| "
          << t1.n_calibration << '\n';
      detail::print_curve(c, "P(p<=alpha)", out);
      out << "wrote " << t1_out << '\n';
      return 0;
    }
    if (v2->parsed()) {
      t2.seed = g.seed;
      const GuaranteeCurve c = fdr_control_experiment(t2, default_t2_alphas());
      detail::write_text(t2_out, detail::to_csv(c));
      out << "validate-t2: pi0 " << t2.pi0 << ", shift " << t2.member_shift << ", " << t2.n_trials << " trials\n";
      detail::print_curve(c, "mean FDR", out);
      out << "wrote " << t2_out << '\n';
      return 0;
    }
    if (gen_cmd->parsed()) {
      gen.seed = g.seed;
      return run_gen_command(gen, gen_out, out);
    }
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "contract violation: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}

}  // namespace miafdr::cli
