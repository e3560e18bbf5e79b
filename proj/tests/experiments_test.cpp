#include "ptnav/experiments.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ptnav/core.hpp"
#include "ptnav/csv.hpp"

namespace {

using namespace ptnav;

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.seeds = 1;
  cfg.preset = "tiny";
  cfg.epochs = 1;
  cfg.quad_trajectories = 1;
  cfg.robot_trajectories = 1;
  return cfg;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

TEST(DatasetRecipe, ValidationRejectsBadRanges) {
  DatasetRecipe r;
  r.trajectories = 0;
  EXPECT_THROW(r.validate(), ValidationError);
  r = DatasetRecipe{};
  r.speed_max = r.speed_min - 1.0;
  EXPECT_THROW(r.validate(), ValidationError);
  r = DatasetRecipe{};
  r.duration = 0.0;
  EXPECT_THROW(r.validate(), ValidationError);
  EXPECT_NO_THROW(DatasetRecipe::quadrotor().validate());
  EXPECT_NO_THROW(DatasetRecipe::robot().validate());
}

TEST(BuildTrainingWindows, CountsMatchStrideAndLabelsSpanSpeedRange) {
  DatasetRecipe r;
  r.trajectories = 2;
  r.duration = 6.0;
  const std::vector<LabeledWindow> data = build_training_windows(r, RegressionTarget::kDistance);
  // 6 s at 120 Hz gives 721 samples; (721 - 120) / 60 + 1 = 11 windows each.
  ASSERT_EQ(data.size(), 22u);
  // Trajectories alternate in the output so a tail split sees both speeds.
  std::vector<double> slow, fast;
  for (std::size_t i = 0; i < 22; ++i) (i % 2 == 0 ? slow : fast).push_back(data[i].label);
  for (const LabeledWindow& lw : data) {
    EXPECT_EQ(lw.x.rows, 6);
    EXPECT_EQ(lw.x.cols, r.window);
    EXPECT_GT(lw.label, 0.0);
  }
  // Trajectory speeds are 2.5 and 4.5 m/s over one-second windows.
  EXPECT_GT(mean(fast), mean(slow) + 1.0);
  EXPECT_NEAR(mean(slow), 2.7, 0.5);
  EXPECT_NEAR(mean(fast), 4.7, 0.5);
  for (std::size_t i = 0; i + 2 < 22; i += 2) {
    EXPECT_LT(data[i].label, data[i + 1].label);
  }
}

TEST(BuildTrainingWindows, AltitudeLabelsRequireQuadrotor) {
  DatasetRecipe r = DatasetRecipe::robot();
  r.duration = 4.0;
  EXPECT_THROW(build_training_windows(r, RegressionTarget::kAltitude), ValidationError);
}

TEST(BuildTrainingWindows, TensorsArriveRowCentered) {
  DatasetRecipe r = DatasetRecipe::quadrotor();
  r.trajectories = 1;
  r.duration = 4.0;
  const auto data = build_training_windows(r, RegressionTarget::kDistance);
  ASSERT_FALSE(data.empty());
  for (const LabeledWindow& lw : data) {
    for (int row = 0; row < lw.x.rows; ++row) {
      double mean = 0.0;
      for (int c = 0; c < lw.x.cols; ++c) mean += lw.x.at(row, c);
      EXPECT_NEAR(mean / lw.x.cols, 0.0, 1e-12);
    }
  }
}

TEST(Quantile, InterpolatesSortedSample) {
  const std::vector<double> v{3.0, 1.0, 4.0, 2.0};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(median(v), 2.5);
  EXPECT_DOUBLE_EQ(median({7.0}), 7.0);
  EXPECT_THROW(quantile({}, 0.5), ValidationError);
}

TEST(SignTest, ExactBinomialTails) {
  EXPECT_NEAR(sign_test_p(15, 20), 21700.0 / 1048576.0, 1e-12);
  EXPECT_NEAR(sign_test_p(14, 20), 60460.0 / 1048576.0, 1e-12);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 20), 1.0);
  EXPECT_NEAR(sign_test_p(20, 20), std::pow(2.0, -20), 1e-18);
  EXPECT_THROW(sign_test_p(5, 4), ValidationError);
  EXPECT_THROW(sign_test_p(-1, 4), ValidationError);
}

TEST(ParallelFor, MatchesSerialAndFillsEverySlot) {
  std::vector<int> serial(100, -1), threaded(100, -1);
  parallel_for(100, 1, [&](int i) { serial[i] = i * i; });
  parallel_for(100, 4, [&](int i) { threaded[i] = i * i; });
  EXPECT_EQ(serial, threaded);
  EXPECT_EQ(std::count(threaded.begin(), threaded.end(), -1), 0);
}

TEST(ParallelFor, PropagatesWorkerException) {
  EXPECT_THROW(parallel_for(20, 3,
                            [](int i) {
                              if (i == 5) throw ValidationError("boom");
                            }),
               ValidationError);
}

TEST(SummaryCsv, WritesHeaderAndRows) {
  const std::string path = ::testing::TempDir() + "summary_schema.csv";
  write_summary_csv(path, {{"a", "median_rmse_m", 1.5}, {"b", "n", 20.0}});
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, std::string(kSummaryCsvHeader));
  std::getline(is, line);
  EXPECT_EQ(line, "a,median_rmse_m,1.5");
  std::getline(is, line);
  EXPECT_EQ(line, "b,n,20");
}

TEST(Table2, PairsKindsBySeedAndSummarizesBothPlatforms) {
  ExperimentConfig cfg = tiny_config();
  cfg.seeds = 2;
  const ExperimentResult serial = run_table2(cfg);
  ASSERT_EQ(serial.runs.size(), 8u);
  EXPECT_EQ(serial.runs[0].run_id, "table2_quadrotor_straight_s0");
  EXPECT_EQ(serial.runs[1].run_id, "table2_quadrotor_pts_s0");
  EXPECT_EQ(serial.runs[4].run_id, "table2_robot_straight_s0");
  for (const RunRecord& r : serial.runs) {
    EXPECT_EQ(r.mode, "INS_GNSS");
    EXPECT_GT(r.rmse_m, 0.0);
    EXPECT_FALSE(r.drmse_m.has_value());
  }
  int improvements = 0;
  for (const SummaryEntry& e : serial.summary) improvements += e.metric == "improvement_pct";
  EXPECT_EQ(improvements, 2);

  cfg.jobs = 3;
  const ExperimentResult threaded = run_table2(cfg);
  ASSERT_EQ(threaded.runs.size(), serial.runs.size());
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    EXPECT_EQ(threaded.runs[i].run_id, serial.runs[i].run_id);
    EXPECT_EQ(threaded.runs[i].rmse_m, serial.runs[i].rmse_m);
  }
}

TEST(Table3, ComparesPresetSizesOnSharedCorpus) {
  const ExperimentResult res = run_table3(tiny_config());
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_EQ(res.runs[0].run_id, "table3_baseline");
  EXPECT_EQ(res.runs[1].run_id, "table3_mini");
  ASSERT_EQ(res.models.size(), 2u);
  EXPECT_EQ(res.models[0].second.parameter_count(), 819825u);
  EXPECT_EQ(res.models[1].second.parameter_count(), 45489u);
  for (const RunRecord& r : res.runs) {
    ASSERT_TRUE(r.drmse_m.has_value());
    EXPECT_GT(*r.drmse_m, 0.0);
  }
  double reduction = 0.0;
  for (const SummaryEntry& e : res.summary) {
    if (e.metric == "param_reduction_pct") reduction = e.value;
  }
  EXPECT_NEAR(reduction, 100.0 * (819825.0 - 45489.0) / 819825.0, 1e-9);
}

TEST(Table4, TinyBudgetProducesPairedRowsAndModels) {
  const ExperimentResult res = run_table4(tiny_config());
  ASSERT_EQ(res.runs.size(), 4u);
  EXPECT_EQ(res.runs[0].run_id, "table4_quadrotor_INS_only_s0");
  EXPECT_EQ(res.runs[1].run_id, "table4_quadrotor_MQN_DR_s0");
  EXPECT_EQ(res.runs[2].run_id, "table4_robot_INS_only_s0");
  EXPECT_EQ(res.runs[3].run_id, "table4_robot_MQN_DR_s0");
  EXPECT_FALSE(res.runs[0].drmse_m.has_value());
  EXPECT_TRUE(res.runs[1].drmse_m.has_value());
  ASSERT_EQ(res.models.size(), 3u);
  EXPECT_EQ(res.models[0].first, "table4_quadrotor_altitude");
  EXPECT_EQ(res.models[1].first, "table4_quadrotor_distance");
  EXPECT_EQ(res.models[2].first, "table4_robot_distance");
  int ratios = 0;
  for (const SummaryEntry& e : res.summary) ratios += e.metric == "rmse_ratio_pct";
  EXPECT_EQ(ratios, 2);
}

TEST(Fig8, WinsAndSignTestAgreeWithRows) {
  ExperimentConfig cfg = tiny_config();
  cfg.seeds = 2;
  const ExperimentResult res = run_fig8(cfg);
  ASSERT_EQ(res.runs.size(), 4u);
  int wins = 0;
  for (int k = 0; k < cfg.seeds; ++k) {
    const RunRecord& gnss = res.runs[2 * k];
    const RunRecord& hybrid = res.runs[2 * k + 1];
    EXPECT_EQ(gnss.mode, "INS_GNSS");
    EXPECT_EQ(hybrid.mode, "INS_GNSS_MQN");
    wins += hybrid.rmse_m < gnss.rmse_m;
  }
  double reported_wins = -1.0, reported_p = -1.0;
  for (const SummaryEntry& e : res.summary) {
    if (e.metric == "wins") reported_wins = e.value;
    if (e.metric == "sign_test_p") reported_p = e.value;
  }
  EXPECT_EQ(reported_wins, static_cast<double>(wins));
  EXPECT_DOUBLE_EQ(reported_p, sign_test_p(wins, cfg.seeds));
  EXPECT_EQ(res.models.size(), 2u);
}

TEST(Experiments, RerunsAreByteIdentical) {
  ExperimentConfig cfg = tiny_config();
  cfg.seeds = 2;
  const std::string a = ::testing::TempDir() + "exp_rerun_a.csv";
  const std::string b = ::testing::TempDir() + "exp_rerun_b.csv";
  const ExperimentResult first = run_table2(cfg);
  const ExperimentResult second = run_table2(cfg);
  write_results_csv(a, first.runs);
  write_results_csv(b, second.runs);
  EXPECT_EQ(read_file(a), read_file(b));
  write_summary_csv(a, first.summary);
  write_summary_csv(b, second.summary);
  EXPECT_EQ(read_file(a), read_file(b));
}

TEST(Experiments, DispatcherRejectsUnknownName) {
  EXPECT_THROW(run_experiment("table9", tiny_config()), ValidationError);
  ExperimentConfig bad = tiny_config();
  bad.seeds = 0;
  EXPECT_THROW(run_experiment("table2", bad), ValidationError);
}

}  // namespace
