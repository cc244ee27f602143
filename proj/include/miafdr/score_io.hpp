#pragma once

// Wrapper mode: ingest membership scores from any external attack, run them
// through the conformal + step-up layers, and export reports. File formats
// are documented in docs/score-formats.md.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "miafdr/conformal.hpp"
#include "miafdr/error.hpp"
#include "miafdr/fdr.hpp"

namespace miafdr {

enum class Role { calibration, test };
enum class Orientation { higher_is_non_member, higher_is_member };
enum class ScoreFormat { csv, jsonl };

inline std::string_view to_string(Role r) noexcept { return r == Role::calibration ? "calibration" : "test"; }
inline std::string_view to_string(Orientation o) noexcept {
  return o == Orientation::higher_is_non_member ? "higher_is_non_member" : "higher_is_member";
}
inline std::string_view to_string(Membership m) noexcept {
  return m == Membership::member ? "member" : "non_member";
}

struct ScoreRecord {
  std::string sample_id;
  double raw_score = 0.0;  // as written in the file
  double score = 0.0;      // normalized: higher always means more non-member-like
  std::optional<Membership> truth;
  Role role = Role::test;

  bool operator==(const ScoreRecord&) const = default;
};

struct ScoreFile {
  std::vector<ScoreRecord> records;
  Orientation orientation = Orientation::higher_is_non_member;

  bool operator==(const ScoreFile&) const = default;
};

namespace detail {

inline std::optional<Orientation> parse_orientation(std::string_view v) {
  if (v == "higher_is_non_member") return Orientation::higher_is_non_member;
  if (v == "higher_is_member") return Orientation::higher_is_member;
  return std::nullopt;
}

inline std::optional<Role> parse_role(std::string_view v) {
  if (v == "calibration") return Role::calibration;
  if (v == "test") return Role::test;
  return std::nullopt;
}

inline std::optional<Membership> parse_membership(std::string_view v) {
  if (v == "member") return Membership::member;
  if (v == "non_member") return Membership::non_member;
  return std::nullopt;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double normalize_score(double raw, Orientation o) {
  return o == Orientation::higher_is_member ? -raw : raw;
}

inline void check_record(const ScoreRecord& r, std::size_t line) {
  if (!std::isfinite(r.raw_score))
    throw ContractError("line " + std::to_string(line) + ": score is not finite");
  if (r.sample_id.empty()) throw ParseError(line, "empty sample_id");
  if (r.role == Role::calibration && r.truth == Membership::member)
    throw ContractError("line " + std::to_string(line) +
                        ": calibration records must be non-members");
}

}  // namespace detail

/// CSV: an optional run of `#` comment lines, one of which must be
/// `# orientation=<...>`, then the header `sample_id,score,role[,truth]`,
/// then one record per line. Line numbers in errors are physical lines.
inline ScoreFile parse_scores_csv(std::istream& is) {
  ScoreFile file;
  std::optional<Orientation> orientation;
  bool have_header = false;
  bool has_truth = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string body = [&] {
        auto b = line.find_first_not_of("# \t");
        return b == std::string::npos ? std::string() : line.substr(b);
      }();
      if (body.rfind("orientation=", 0) == 0) {
        orientation = detail::parse_orientation(body.substr(12));
        if (!orientation) throw ParseError(line_no, "unknown orientation '" + body.substr(12) + "'");
      }
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (!have_header) {
      if (fields.size() < 3 || fields[0] != "sample_id" || fields[1] != "score" || fields[2] != "role" ||
          (fields.size() == 4 && fields[3] != "truth") || fields.size() > 4) {
        throw ParseError(line_no, "header must be 'sample_id,score,role[,truth]'");
      }
      has_truth = fields.size() == 4;
      have_header = true;
      continue;
    }
    const std::size_t expected = has_truth ? 4 : 3;
    if (fields.size() != expected)
      throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " +
                                    std::to_string(fields.size()));
    ScoreRecord r;
    r.sample_id = fields[0];
    if (!detail::parse_double(fields[1], r.raw_score)) throw ParseError(line_no, "malformed score '" + fields[1] + "'");
    auto role = detail::parse_role(fields[2]);
    if (!role) throw ParseError(line_no, "unknown role '" + fields[2] + "'");
    r.role = *role;
    if (has_truth && !fields[3].empty()) {
      r.truth = detail::parse_membership(fields[3]);
      if (!r.truth) throw ParseError(line_no, "unknown truth '" + fields[3] + "'");
    }
    detail::check_record(r, line_no);
    file.records.push_back(std::move(r));
  }
  if (!have_header) throw ParseError(line_no, "missing header line");
  if (!orientation) throw ContractError("missing '# orientation=...' line");
  file.orientation = *orientation;
  for (ScoreRecord& r : file.records) r.score = detail::normalize_score(r.raw_score, file.orientation);
  return file;
}

/// JSONL: first object `{"orientation": "..."}`, then one object per record
/// with keys sample_id (string), score (number), role, truth (optional).
inline ScoreFile parse_scores_jsonl(std::istream& is) {
  ScoreFile file;
  std::optional<Orientation> orientation;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    if (!orientation) {
      if (!j.contains("orientation")) throw ContractError("missing orientation object on the first line");
      const auto& o = j["orientation"];
      if (!o.is_string()) throw ParseError(line_no, "orientation must be a string");
      orientation = detail::parse_orientation(o.get<std::string>());
      if (!orientation) throw ParseError(line_no, "unknown orientation '" + o.get<std::string>() + "'");
      continue;
    }
    for (const char* key : {"sample_id", "score", "role"})
      if (!j.contains(key)) throw ParseError(line_no, std::string("missing field '") + key + "'");
    if (!j["sample_id"].is_string()) throw ParseError(line_no, "sample_id must be a string");
    if (!j["score"].is_number()) throw ParseError(line_no, "malformed score");
    if (!j["role"].is_string()) throw ParseError(line_no, "role must be a string");
    ScoreRecord r;
    r.sample_id = j["sample_id"].get<std::string>();
    r.raw_score = j["score"].get<double>();
    auto role = detail::parse_role(j["role"].get<std::string>());
    if (!role) throw ParseError(line_no, "unknown role");
    r.role = *role;
    if (j.contains("truth") && !j["truth"].is_null()) {
      if (!j["truth"].is_string()) throw ParseError(line_no, "truth must be a string");
      r.truth = detail::parse_membership(j["truth"].get<std::string>());
      if (!r.truth) throw ParseError(line_no, "unknown truth");
    }
    detail::check_record(r, line_no);
    file.records.push_back(std::move(r));
  }
  if (!orientation) throw ContractError("missing orientation");
  file.orientation = *orientation;
  for (ScoreRecord& r : file.records) r.score = detail::normalize_score(r.raw_score, file.orientation);
  return file;
}

inline ScoreFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") return ScoreFormat::jsonl;
  return ScoreFormat::csv;
}

inline ScoreFile import_scores(const std::filesystem::path& path, ScoreFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file '" + path.string() + "'");
  return format == ScoreFormat::csv ? parse_scores_csv(in) : parse_scores_jsonl(in);
}

/// Writes raw scores and the declared orientation, so parse -> write is
/// lossless.
inline void write_scores_csv(const ScoreFile& file, std::ostream& os) {
  os << "# orientation=" << to_string(file.orientation) << '\n';
  os << "sample_id,score,role,truth\n";
  for (const ScoreRecord& r : file.records) {
    os << r.sample_id << ',' << detail::format_double(r.raw_score) << ',' << to_string(r.role) << ','
       << (r.truth ? to_string(*r.truth) : "") << '\n';
  }
}

inline void write_scores_jsonl(const ScoreFile& file, std::ostream& os) {
  os << nlohmann::json{{"orientation", to_string(file.orientation)}}.dump() << '\n';
  for (const ScoreRecord& r : file.records) {
    nlohmann::json j{{"sample_id", r.sample_id}, {"score", r.raw_score}, {"role", to_string(r.role)}};
    if (r.truth) j["truth"] = to_string(*r.truth);
    os << j.dump() << '\n';
  }
}

struct WrapResult {
  std::vector<std::string> sample_ids;  // test records, file order
  std::vector<double> scores;           // normalized test scores
  std::vector<std::optional<Membership>> truth;
  PValueVector pvalues;
  AdjustedPValues adjusted;
  DecisionSet decisions;
  std::optional<FdrReport> report;  // only when every test record has truth
};

/// Calibration-role scores form the calibration set as-is (they are already
/// conformity-like); test-role scores get conformal p-values, then the
/// batch is adjusted and thresholded.
inline WrapResult wrap_external(const ScoreFile& file, SignificanceLevel alpha) {
  std::vector<double> calib_scores;
  WrapResult out;
  for (const ScoreRecord& r : file.records) {
    if (r.role == Role::calibration) {
      calib_scores.push_back(r.score);
    } else {
      out.sample_ids.push_back(r.sample_id);
      out.scores.push_back(r.score);
      out.truth.push_back(r.truth);
    }
  }
  detail::require(!calib_scores.empty(), "score file has no calibration records");
  detail::require(!out.scores.empty(), "score file has no test records");

  const CalibrationScores calib = build_calibration(calib_scores);
  out.pvalues = batch_pvalues(calib, out.scores);
  out.adjusted = bh_adjust(out.pvalues);
  out.decisions = decide(out.adjusted, alpha);
  const bool all_truth = std::all_of(out.truth.begin(), out.truth.end(), [](const auto& t) { return t.has_value(); });
  if (all_truth) {
    std::vector<Membership> truth;
    for (const auto& t : out.truth) truth.push_back(*t);
    out.report = compute_fdr(out.decisions, truth);
  }
  return out;
}

/// Report object: always alpha, n_tests and n_rejected; the remaining
/// FdrReport fields only when ground truth was available.
inline nlohmann::json report_json(const WrapResult& r) {
  if (r.report) return nlohmann::json(*r.report);
  return {{"alpha", r.decisions.alpha},
          {"n_tests", r.decisions.size()},
          {"n_rejected", r.decisions.rejected.size()}};
}

struct VerdictRow {
  std::string sample_id;
  double p_value = 0.0;
  double p_adjusted = 0.0;
  bool member = false;
  std::optional<Membership> truth;

  bool operator==(const VerdictRow&) const = default;
};

inline void write_verdicts_csv(const WrapResult& r, std::ostream& os) {
  os << "sample_id,p_value,p_adjusted,verdict,truth\n";
  for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
    os << r.sample_ids[i] << ',' << detail::format_double(r.pvalues.values[i]) << ','
       << detail::format_double(r.adjusted.adjusted[i]) << ','
       << (r.decisions.is_member[i] ? "member" : "non_member") << ','
       << (r.truth[i] ? to_string(*r.truth[i]) : "") << '\n';
  }
}

inline std::vector<VerdictRow> read_verdicts_csv(std::istream& is) {
  std::vector<VerdictRow> rows;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,p_value,p_adjusted,verdict,truth")
    throw ParseError(1, "unexpected verdict header");
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) throw ParseError(line_no, "expected 5 fields");
    VerdictRow row;
    row.sample_id = f[0];
    if (!detail::parse_double(f[1], row.p_value) || !detail::parse_double(f[2], row.p_adjusted))
      throw ParseError(line_no, "malformed p-value");
    if (f[3] != "member" && f[3] != "non_member") throw ParseError(line_no, "unknown verdict");
    row.member = f[3] == "member";
    if (!f[4].empty()) {
      row.truth = detail::parse_membership(f[4]);
      if (!row.truth) throw ParseError(line_no, "unknown truth");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Writes the JSON report to `report_path` and the per-sample verdicts to
/// `samples_path`.
inline void export_report(const WrapResult& r, const std::filesystem::path& report_path,
                          const std::filesystem::path& samples_path) {
  {
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write '" + report_path.string() + "'");
    out << report_json(r).dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + report_path.string() + "'");
  }
  std::ofstream out(samples_path);
  if (!out) throw IoError("cannot write '" + samples_path.string() + "'");
  write_verdicts_csv(r, out);
  if (!out) throw IoError("failed writing '" + samples_path.string() + "'");
}

}  // namespace miafdr
