#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "miafdr/experiments.hpp"
#include "miafdr/score_io.hpp"

namespace miafdr {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("miafdr_score_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSmallCsv =
    "# exported by some attack\n"
    "# orientation=higher_is_non_member\n"
    "sample_id,score,role,truth\n"
    "c1,0.1,calibration,\n"
    "c2,0.4,calibration,\n"
    "c3,0.7,calibration,\n"
    "t1,0.5,test,member\n"
    "t2,0.9,test,non_member\n";

TEST(ScoreCsvTest, ParsesRecords) {
  std::istringstream in(kSmallCsv);
  const ScoreFile f = parse_scores_csv(in);
  ASSERT_EQ(f.records.size(), 5u);
  EXPECT_EQ(f.orientation, Orientation::higher_is_non_member);
  EXPECT_EQ(std::count_if(f.records.begin(), f.records.end(), [](auto& r) { return r.role == Role::calibration; }),
            3);
  EXPECT_EQ(f.records[3].sample_id, "t1");
  EXPECT_EQ(f.records[3].score, 0.5);
  EXPECT_EQ(f.records[3].truth, Membership::member);
  EXPECT_FALSE(f.records[0].truth.has_value());
}

TEST(ScoreCsvTest, HigherIsMemberIsNegated) {
  std::istringstream in(
      "# orientation=higher_is_member\n"
      "sample_id,score,role\n"
      "c1,0.25,calibration\n"
      "t1,-3,test\n");
  const ScoreFile f = parse_scores_csv(in);
  EXPECT_EQ(f.records[0].raw_score, 0.25);
  EXPECT_EQ(f.records[0].score, -0.25);
  EXPECT_EQ(f.records[1].score, 3.0);
}

TEST(ScoreCsvTest, MalformedNumberReportsLine) {
  std::istringstream in(
      "# orientation=higher_is_non_member\n"
      "sample_id,score,role\n"
      "c1,0.1,calibration\n"
      "c2,0.2,calibration\n"
      "c3,0.3,calibration\n"
      "t1,0.4,test\n"
      "t2,0.4x,test\n");
  try {
    parse_scores_csv(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
}

TEST(ScoreCsvTest, StructuralErrors) {
  std::istringstream no_orientation("sample_id,score,role\nc1,0.1,calibration\n");
  EXPECT_THROW(parse_scores_csv(no_orientation), ContractError);
  std::istringstream bad_header("# orientation=higher_is_member\nid,score,role\n");
  EXPECT_THROW(parse_scores_csv(bad_header), ParseError);
  std::istringstream missing_field("# orientation=higher_is_member\nsample_id,score,role\nc1,0.1\n");
  EXPECT_THROW(parse_scores_csv(missing_field), ParseError);
  std::istringstream bad_role("# orientation=higher_is_member\nsample_id,score,role\nc1,0.1,train\n");
  EXPECT_THROW(parse_scores_csv(bad_role), ParseError);
  std::istringstream non_finite("# orientation=higher_is_member\nsample_id,score,role\nc1,inf,test\n");
  EXPECT_THROW(parse_scores_csv(non_finite), ContractError);
  std::istringstream member_calib(
      "# orientation=higher_is_member\nsample_id,score,role,truth\nc1,0.1,calibration,member\n");
  EXPECT_THROW(parse_scores_csv(member_calib), ContractError);
}

TEST(ScoreJsonlTest, ParsesRecords) {
  std::istringstream in(
      "{\"orientation\": \"higher_is_member\"}\n"
      "{\"sample_id\": \"c1\", \"score\": 0.5, \"role\": \"calibration\"}\n"
      "\n"
      "{\"sample_id\": \"t1\", \"score\": 2, \"role\": \"test\", \"truth\": \"member\"}\n");
  const ScoreFile f = parse_scores_jsonl(in);
  ASSERT_EQ(f.records.size(), 2u);
  EXPECT_EQ(f.orientation, Orientation::higher_is_member);
  EXPECT_EQ(f.records[1].score, -2.0);
  EXPECT_EQ(f.records[1].truth, Membership::member);
}

TEST(ScoreJsonlTest, Errors) {
  std::istringstream no_orientation("{\"sample_id\": \"c1\", \"score\": 0.5, \"role\": \"test\"}\n");
  EXPECT_THROW(parse_scores_jsonl(no_orientation), ContractError);
  std::istringstream broken("{\"orientation\": \"higher_is_member\"}\n{\"sample_id\": \"c1\", \n");
  try {
    parse_scores_jsonl(broken);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream string_score(
      "{\"orientation\": \"higher_is_member\"}\n{\"sample_id\": \"c1\", \"score\": \"0.5\", \"role\": \"test\"}\n");
  EXPECT_THROW(parse_scores_jsonl(string_score), ParseError);
}

TEST(ScoreFormatTest, FromPath) {
  EXPECT_EQ(format_from_path("a/b.jsonl"), ScoreFormat::jsonl);
  EXPECT_EQ(format_from_path("scores.csv"), ScoreFormat::csv);
  EXPECT_THROW(import_scores("/nonexistent/miafdr/scores.csv", ScoreFormat::csv), IoError);
}

ScoreFile make_file(const std::vector<double>& calib, const std::vector<double>& test) {
  ScoreFile f;
  for (std::size_t i = 0; i < calib.size(); ++i)
    f.records.push_back({"c" + std::to_string(i), calib[i], calib[i], std::nullopt, Role::calibration});
  for (std::size_t i = 0; i < test.size(); ++i)
    f.records.push_back({"t" + std::to_string(i), test[i], test[i], std::nullopt, Role::test});
  return f;
}

TEST(WrapTest, WorkedExample) {
  const WrapResult r = wrap_external(make_file({0.1, 0.4, 0.7, 0.9}, {0.5}), SignificanceLevel(0.5));
  EXPECT_DOUBLE_EQ(r.pvalues.values[0], 0.6);
  EXPECT_DOUBLE_EQ(r.adjusted.adjusted[0], 0.6);
  EXPECT_TRUE(r.decisions.rejected.empty());
  EXPECT_FALSE(r.report.has_value());
  const nlohmann::json j = report_json(r);
  EXPECT_EQ(j["n_rejected"], 0);
  EXPECT_EQ(j["n_tests"], 1);
  EXPECT_FALSE(j.contains("fdr"));
}

TEST(WrapTest, ScoresAboveCalibrationGetPValueOne) {
  const WrapResult r = wrap_external(make_file({0.1, 0.2, 0.3}, {5.0, 6.0, 7.0}), SignificanceLevel(0.2));
  for (double p : r.pvalues.values) EXPECT_EQ(p, 1.0);
  EXPECT_TRUE(r.decisions.rejected.empty());
}

TEST(WrapTest, MissingRolesAreContractErrors) {
  EXPECT_THROW(wrap_external(make_file({}, {0.5}), SignificanceLevel(0.1)), ContractError);
  EXPECT_THROW(wrap_external(make_file({0.5}, {}), SignificanceLevel(0.1)), ContractError);
}

ScoreFile synthetic_file(const SyntheticSpec& spec, std::uint64_t trial) {
  const SyntheticDraw draw = generate_synthetic(spec, trial);
  ScoreFile f;
  for (std::size_t i = 0; i < draw.calibration.size(); ++i)
    f.records.push_back({"c" + std::to_string(i), draw.calibration[i], draw.calibration[i], std::nullopt,
                         Role::calibration});
  for (std::size_t i = 0; i < draw.test.size(); ++i)
    f.records.push_back({"t" + std::to_string(i), draw.test[i], draw.test[i], draw.truth[i], Role::test});
  return f;
}

TEST(WrapTest, MatchesManualCompositionAndReport) {
  SyntheticSpec spec;
  spec.n_calibration = 200;
  spec.n_test = 60;
  spec.seed = 4;
  const ScoreFile f = synthetic_file(spec, 0);
  const WrapResult r = wrap_external(f, SignificanceLevel(0.1));

  const SyntheticDraw draw = generate_synthetic(spec, 0);
  const PValueVector p = batch_pvalues(build_calibration(draw.calibration), draw.test);
  const DecisionSet d = decide(bh_adjust(p), SignificanceLevel(0.1));
  EXPECT_EQ(r.pvalues.values, p.values);
  EXPECT_EQ(r.decisions.rejected, d.rejected);
  ASSERT_TRUE(r.report.has_value());
  EXPECT_EQ(*r.report, compute_fdr(d, draw.truth));
  EXPECT_EQ(report_json(r)["fdr"].get<double>(), r.report->fdr);
}

TEST(WrapTest, SyntheticFdrWithinAlpha) {
  SyntheticSpec spec;
  spec.n_calibration = 500;
  spec.n_test = 100;
  spec.seed = 5;
  double sum = 0.0;
  const std::size_t trials = 200;
  for (std::size_t t = 0; t < trials; ++t) sum += wrap_external(synthetic_file(spec, t), SignificanceLevel(0.1)).report->fdr;
  EXPECT_LE(sum / trials, 0.1);
}

TEST(ExportTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  std::vector<double> calib(100), test(30);
  for (double& v : calib) v = normal(rng);
  for (double& v : test) v = normal(rng) - 1.5;
  const WrapResult r = wrap_external(make_file(calib, test), SignificanceLevel(0.2));
  const fs::path dir = temp_dir("export");
  export_report(r, dir / "report.json", dir / "verdicts.csv");

  std::ifstream in(dir / "verdicts.csv");
  const auto rows = read_verdicts_csv(in);
  ASSERT_EQ(rows.size(), test.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].sample_id, r.sample_ids[i]);
    EXPECT_EQ(rows[i].p_value, r.pvalues.values[i]);
    EXPECT_EQ(rows[i].p_adjusted, r.adjusted.adjusted[i]);
    EXPECT_EQ(rows[i].member, r.decisions.is_member[i]);
  }
  std::ifstream rj(dir / "report.json");
  const nlohmann::json j = nlohmann::json::parse(rj);
  EXPECT_EQ(j["n_rejected"].get<std::size_t>(), r.decisions.rejected.size());
  fs::remove_all(dir);
}

TEST(ExportTest, ScoreFileRoundTripKeepsOrientation) {
  for (Orientation o : {Orientation::higher_is_member, Orientation::higher_is_non_member}) {
    ScoreFile f = make_file({0.1, 1.0 / 3.0}, {-2.5e-8});
    f.orientation = o;
    f.records[2].truth = Membership::member;
    for (ScoreRecord& r : f.records) r.score = o == Orientation::higher_is_member ? -r.raw_score : r.raw_score;

    std::stringstream csv;
    write_scores_csv(f, csv);
    EXPECT_EQ(parse_scores_csv(csv), f);
    std::stringstream jsonl;
    write_scores_jsonl(f, jsonl);
    EXPECT_EQ(parse_scores_jsonl(jsonl), f);
  }
}

TEST(ExportTest, UnwritablePathIsIoError) {
  const WrapResult r = wrap_external(make_file({0.1}, {0.2}), SignificanceLevel(0.2));
  EXPECT_THROW(export_report(r, "/nonexistent/miafdr/r.json", "/nonexistent/miafdr/v.csv"), IoError);
}

}  // namespace
}  // namespace miafdr
