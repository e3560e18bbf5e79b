#include "ptnav/fusion.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ptnav/core.hpp"
#include "ptnav/deadreck.hpp"
#include "ptnav/eskf.hpp"
#include "ptnav/metrics.hpp"
#include "ptnav/simgen.hpp"
#include "ptnav/strapdown.hpp"

namespace ptnav {
namespace {

constexpr double kDt = 1.0 / 120.0;

struct Scene {
  TrajectorySpec spec;
  std::vector<TruthSample> truth;
  std::vector<ImuSample> ideal;
};

Scene make_scene(const TrajectorySpec& spec) {
  Scene s;
  s.spec = spec;
  s.truth = generate_truth(spec, kDt);
  s.ideal = inverse_imu(s.truth);
  return s;
}

const Scene& quad_pts() {
  static const Scene s = make_scene(TrajectorySpec::quadrotor_default());
  return s;
}

const Scene& quad_straight() {
  static const Scene s = [] {
    TrajectorySpec spec = TrajectorySpec::quadrotor_default();
    spec.kind = TrajectoryKind::kStraight;
    spec.duration = 3.0;
    return make_scene(spec);
  }();
  return s;
}

NavState initial_state(const Scene& s) {
  NavState init;
  init.t = s.truth.front().t;
  init.p = s.truth.front().p;
  init.v = s.truth.front().v;
  init.att = s.truth.front().att;
  return init;
}

double path_length(const std::vector<TruthSample>& truth) {
  double len = 0.0;
  for (std::size_t i = 1; i < truth.size(); ++i) len += (truth[i].p - truth[i - 1].p).norm();
  return len;
}

double horizontal_error(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x() - b.x(), a.y() - b.y());
}

TEST(RunMode, NamesRoundTrip) {
  for (RunMode m : {RunMode::kInsOnly, RunMode::kInsGnss, RunMode::kMqnDr, RunMode::kMqnEkf,
                    RunMode::kInsGnssMqn}) {
    EXPECT_EQ(run_mode_by_name(to_string(m)), m);
  }
  EXPECT_EQ(to_string(RunMode::kInsGnssMqn), std::string("INS_GNSS_MQN"));
  EXPECT_THROW(run_mode_by_name("ins_only"), ValidationError);
}

TEST(NoiseConfigFromSensorSpec, CopiesDensities) {
  const SensorErrorSpec es = SensorErrorSpec::movella(3);
  const NoiseConfig nc = noise_config(es);
  EXPECT_EQ(nc.accel_noise_density, es.accel_noise_density);
  EXPECT_EQ(nc.gyro_noise_density, es.gyro_noise_density);
  EXPECT_EQ(nc.accel_bias_rw, es.accel_bias_rw);
  EXPECT_EQ(nc.gyro_bias_rw, es.gyro_bias_rw);
}

TEST(GnssMeasurement, BuildsPositionBlockAndResidual) {
  PositionFix fix;
  fix.t = 2.0;
  fix.p = Vec3(1.0, -2.0, 3.0);
  fix.sigma = 0.5;
  const BuiltMeasurement same = gnss_measurement(fix, fix.p);
  EXPECT_EQ(same.residual, Vec3::Zero());
  EXPECT_EQ(same.measurement.source, FixSource::kGnss);
  EXPECT_TRUE(same.measurement.R.isApprox(0.25 * Mat3::Identity()));

  const BuiltMeasurement east = gnss_measurement(fix, fix.p + Vec3(0.0, 1.0, 0.0));
  EXPECT_EQ(east.residual, Vec3(0.0, 1.0, 0.0));

  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(east.model.H(i, kIdxPos + i), 1.0);
    for (int j = 0; j < 15; ++j) sum += std::abs(east.model.H(i, j));
  }
  EXPECT_EQ(sum, 3.0);
}

TEST(GnssMeasurement, UpdateMovesEastErrorWest) {
  PositionFix fix;
  fix.t = 0.0;
  fix.p = Vec3::Zero();
  fix.sigma = 0.01;
  NavState init;
  init.p = Vec3(0.0, 1.0, 0.0);
  Eskf filter(init, default_initial_covariance(), NoiseConfig{});
  const BuiltMeasurement built = gnss_measurement(fix, filter.state().p);
  const UpdateResult res = filter.update_position(built.model, built.measurement.z);
  ASSERT_FALSE(res.rejected);
  EXPECT_LT(filter.state().p.y(), 1.0);
  EXPECT_LT(std::abs(filter.state().p.y()), 0.01);
}

TEST(MqnMeasurement, UsesDeadReckonedPosition) {
  DrState dr;
  dr.t = 1.5;
  dr.x = 4.0;
  dr.y = -1.0;
  dr.z = 2.0;
  const Mat3 r = 0.04 * Mat3::Identity();
  const BuiltMeasurement built = mqn_measurement(dr, Vec3(4.0, -1.0, 2.5), r);
  EXPECT_EQ(built.measurement.source, FixSource::kMqn);
  EXPECT_EQ(built.measurement.z, Vec3(4.0, -1.0, 2.0));
  EXPECT_EQ(built.residual, Vec3(0.0, 0.0, 0.5));
  EXPECT_EQ(built.model.R, r);
}

TEST(ModelRegressor, PredictionsIgnoreConstantChannelOffsets) {
  const Scene& sc = quad_pts();
  const auto windows = make_windows(sc.ideal, kDefaultWindow, kDefaultWindow);
  ASSERT_FALSE(windows.empty());
  const RegressorModel model =
      preset_by_name("tiny", kDefaultWindow, RegressionTarget::kDistance);
  const MqnRegressor r = model_regressor(model);

  Window shifted = windows[0];
  for (int c = 0; c < shifted.tensor.cols; ++c) {
    for (int row = 0; row < shifted.tensor.rows; ++row) {
      shifted.tensor.at(row, c) += 0.05 * (row + 1);
    }
  }
  EXPECT_NEAR(r.distance(windows[0]), r.distance(shifted), 1e-12);
}

TEST(UpdateSchedule, RejectsCoincidentAndUnsortedEpochs) {
  UpdateSchedule s;
  s.gnss_epochs = {1.0, 2.0, 3.0};
  s.mqn_epochs = {1.5, 2.5};
  EXPECT_NO_THROW(s.validate(0.5 * kDt));
  s.mqn_epochs = {1.5, 2.0};
  EXPECT_THROW(s.validate(0.5 * kDt), ValidationError);
  s.mqn_epochs = {2.5, 1.5};
  EXPECT_THROW(s.validate(0.5 * kDt), ValidationError);
  s.mqn_epochs.clear();
  s.gnss_epochs = {1.0, 1.0};
  EXPECT_THROW(s.validate(0.5 * kDt), ValidationError);
}

TEST(RunFusion, PredictPrecedesUpdateAtSharedEpoch) {
  const Scene& sc = quad_straight();
  FusionConfig cfg = default_fusion_config(RunMode::kInsGnss, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  PositionFix fix;
  fix.t = 1.0;
  fix.p = sc.truth[120].p;
  fix.sigma = 1.0;
  const FusionResult res = run_fusion(sc.ideal, {fix}, MqnRegressor{}, cfg);
  ASSERT_EQ(res.innovations.size(), 1u);
  EXPECT_LT(res.innovations[0].innovation.norm(), 1e-3);
}

TEST(RunFusion, InsOnlyNoiseFreeTracksTruth) {
  const Scene& sc = quad_pts();
  FusionConfig cfg = default_fusion_config(RunMode::kInsOnly, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  const FusionResult res = run_fusion(sc.ideal, {}, MqnRegressor{}, cfg);
  ASSERT_EQ(res.states.size(), sc.truth.size());
  EXPECT_FALSE(res.aborted);
  double worst = 0.0;
  for (std::size_t i = 0; i < res.states.size(); ++i) {
    worst = std::max(worst, (res.states[i].p - sc.truth[i].p).norm());
  }
  EXPECT_LT(worst, 1e-3 * path_length(sc.truth));
}

TEST(RunFusion, NoFixesReducesInsGnssToInsOnlyBitExact) {
  const Scene& sc = quad_pts();
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, SensorErrorSpec::movella(11));
  FusionConfig cfg = default_fusion_config(RunMode::kInsGnss, Platform::kQuadrotor,
                                           initial_state(sc),
                                           noise_config(SensorErrorSpec::movella(11)));
  const FusionResult aided = run_fusion(noisy, {}, MqnRegressor{}, cfg);
  cfg.mode = RunMode::kInsOnly;
  const FusionResult pure = run_fusion(noisy, {}, MqnRegressor{}, cfg);
  ASSERT_EQ(aided.states.size(), pure.states.size());
  EXPECT_TRUE(aided.innovations.empty());
  for (std::size_t i = 0; i < aided.states.size(); ++i) {
    ASSERT_EQ(aided.states[i].p, pure.states[i].p);
    ASSERT_EQ(aided.states[i].v, pure.states[i].v);
  }
}

TEST(RunFusion, GnssBoundsErrorWhileInsOnlyDrifts) {
  const Scene& sc = quad_pts();
  const SensorErrorSpec es = SensorErrorSpec::movella(7);
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, es);
  GnssSpec gs;
  gs.seed = 7;
  const std::vector<PositionFix> fixes = gnss_fixes(sc.truth, gs);

  FusionConfig cfg = default_fusion_config(RunMode::kInsOnly, Platform::kQuadrotor,
                                           initial_state(sc), noise_config(es));
  const FusionResult pure = run_fusion(noisy, {}, MqnRegressor{}, cfg);
  cfg.mode = RunMode::kInsGnss;
  const FusionResult aided = run_fusion(noisy, fixes, MqnRegressor{}, cfg);

  const double drift = horizontal_error(pure.states.back().p, sc.truth.back().p);
  const double bounded = horizontal_error(aided.states.back().p, sc.truth.back().p);
  EXPECT_GT(drift, 3.0);
  EXPECT_LT(bounded, 3.0);
  EXPECT_LT(bounded, drift);
  EXPECT_EQ(aided.innovations.size(), fixes.size());
}

TEST(RunFusion, MqnEkfTracksOpenLoopOracleChain) {
  const Scene& sc = quad_pts();
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, SensorErrorSpec::movella(3));
  const MqnRegressor oracle = oracle_regressor(sc.truth, 1e-4, 1e-4);
  FusionConfig cfg = default_fusion_config(RunMode::kMqnEkf, Platform::kQuadrotor,
                                           initial_state(sc),
                                           noise_config(SensorErrorSpec::movella(3)));
  const FusionResult res = run_fusion(noisy, {}, oracle, cfg);
  ASSERT_FALSE(res.aborted);
  ASSERT_EQ(res.innovations.size(), 36u);

  // Each update leaves a residual of (1 - K) times the innovation; with
  // R = sigma^2 I that fraction is at most R over the white-noise floor of
  // the position variance regrown across one window.
  Vec3 chain = sc.truth.front().p;
  std::vector<double> gaps;
  for (const InnovationRecord& rec : res.innovations) {
    ASSERT_EQ(rec.source, FixSource::kMqn);
    ASSERT_FALSE(rec.rejected);
    const std::size_t k = static_cast<std::size_t>(std::llround(rec.t / kDt));
    const std::size_t first = k - 120;
    Window probe;
    probe.first_sample = first;
    probe.tensor = Array2d(6, 120);
    const double psi = yaw_of(res.states[first].att).psi;
    DrState anchor;
    anchor.x = chain.x();
    anchor.y = chain.y();
    anchor.z = chain.z();
    const DrState z = dr_step(anchor, oracle.distance(probe), oracle.altitude(probe), psi);
    chain = Vec3(z.x, z.y, z.z);
    const double gap = (res.states[k].p - chain).norm();
    gaps.push_back(gap);
    EXPECT_LT(gap, 0.01 * rec.innovation.norm() + 1e-3);
  }
  for (std::size_t i = gaps.size() - 5; i < gaps.size(); ++i) EXPECT_LT(gaps[i], 0.05);
}

TEST(RunFusion, HybridAppliesBothSourcesAndKeepsCovarianceSane) {
  const Scene& sc = quad_pts();
  const SensorErrorSpec es = SensorErrorSpec::movella(9);
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, es);
  GnssSpec gs;
  gs.seed = 9;
  const std::vector<PositionFix> fixes = gnss_fixes(sc.truth, gs);
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.1, 0.05);
  FusionConfig cfg = default_fusion_config(RunMode::kInsGnssMqn, Platform::kQuadrotor,
                                           initial_state(sc), noise_config(es));
  const FusionResult res = run_fusion(noisy, fixes, oracle, cfg);
  ASSERT_FALSE(res.aborted);

  std::size_t gnss = 0;
  std::size_t mqn = 0;
  for (const InnovationRecord& rec : res.innovations) {
    (rec.source == FixSource::kGnss ? gnss : mqn) += 1;
  }
  EXPECT_EQ(gnss, 36u);
  EXPECT_EQ(mqn, 35u);

  for (std::size_t i = 0; i < res.position_covariances.size(); i += 100) {
    const Mat3& p = res.position_covariances[i];
    EXPECT_LT((p - p.transpose()).norm(), 1e-9);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(p);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }

  const std::vector<TimedPosition> gt = [&] {
    std::vector<TimedPosition> v;
    for (const TruthSample& s : sc.truth) v.push_back({s.t, s.p});
    return v;
  }();
  EXPECT_LT(rmse(res.estimates, gt), 3.0);
}

TEST(RunFusion, StaleWindowSkippedWithWarning) {
  const Scene& sc = quad_pts();
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, SensorErrorSpec::movella(13));
  GnssSpec gs;
  gs.seed = 13;
  const std::vector<PositionFix> fixes = gnss_fixes(sc.truth, gs);
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.1, 0.05);
  FusionConfig cfg = default_fusion_config(RunMode::kInsGnssMqn, Platform::kQuadrotor,
                                           initial_state(sc),
                                           noise_config(SensorErrorSpec::movella(13)));
  cfg.mqn_offset = 0.5;
  testing::internal::CaptureStderr();
  const FusionResult res = run_fusion(noisy, fixes, oracle, cfg);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("stale"), std::string::npos);
  std::size_t mqn = 0;
  for (const InnovationRecord& rec : res.innovations) mqn += rec.source == FixSource::kMqn;
  EXPECT_EQ(mqn, 35u);
}

TEST(RunFusion, DivergenceAbortsWithDiagnostics) {
  const Scene& sc = quad_straight();
  FusionConfig cfg = default_fusion_config(RunMode::kInsGnss, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  PositionFix fix;
  fix.t = 1.0;
  fix.p = sc.truth[120].p + Vec3(5000.0, 0.0, 0.0);
  fix.sigma = 1.0;
  const FusionResult res = run_fusion(sc.ideal, {fix}, MqnRegressor{}, cfg);
  EXPECT_TRUE(res.aborted);
  EXPECT_NE(res.abort_reason.find("diverged"), std::string::npos);
  EXPECT_LT(res.states.size(), sc.ideal.size());
  EXPECT_EQ(res.states.size(), 121u);
}

TEST(RunFusion, RobotHoldsAltitudeAtInitialValue) {
  TrajectorySpec spec = TrajectorySpec::robot_default();
  spec.duration = 36.0;
  const Scene sc = make_scene(spec);
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, SensorErrorSpec::movella(5));
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.05, 0.05);
  FusionConfig cfg = default_fusion_config(RunMode::kMqnEkf, Platform::kGroundRobot,
                                           initial_state(sc),
                                           noise_config(SensorErrorSpec::movella(5)));
  const FusionResult res = run_fusion(noisy, {}, oracle, cfg);
  ASSERT_FALSE(res.aborted);
  EXPECT_LT(std::abs(res.states.back().p.z() - sc.truth.front().p.z()), 0.5);
}

TEST(RunFusion, QuadrotorDemandsAltitudeSource) {
  const Scene& sc = quad_pts();
  MqnRegressor distance_only = oracle_regressor(sc.truth, 0.1, 0.05);
  distance_only.altitude = nullptr;
  FusionConfig cfg = default_fusion_config(RunMode::kMqnEkf, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  EXPECT_THROW(run_fusion(sc.ideal, {}, distance_only, cfg), ValidationError);
}

TEST(RunFusion, OpenLoopChainDemandsWindowAlignedEpochs) {
  const Scene& sc = quad_pts();
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.1, 0.05);
  FusionConfig cfg = default_fusion_config(RunMode::kMqnEkf, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  cfg.mqn_offset = 1.5;
  EXPECT_THROW(run_fusion(sc.ideal, {}, oracle, cfg), ValidationError);
}

TEST(RunFusion, WindowedDeadReckoningMatchesStraightTruth) {
  const Scene& sc = quad_straight();
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.1, 0.05);
  FusionConfig cfg = default_fusion_config(RunMode::kMqnDr, Platform::kQuadrotor,
                                           initial_state(sc), NoiseConfig{});
  const FusionResult res = run_fusion(sc.ideal, {}, oracle, cfg);
  ASSERT_EQ(res.dr_track.size(), 3u);
  ASSERT_EQ(res.estimates.size(), 4u);
  EXPECT_EQ(res.estimates.front().t, sc.truth.front().t);
  EXPECT_EQ(res.estimates.back().t, sc.truth.back().t);
  EXPECT_LT((res.estimates.back().p - sc.truth.back().p).norm(),
            1e-3 * path_length(sc.truth));
}

TEST(RunFusion, RerunsAreBitIdentical) {
  const Scene& sc = quad_pts();
  const SensorErrorSpec es = SensorErrorSpec::movella(21);
  const std::vector<ImuSample> noisy = corrupt(sc.ideal, es);
  GnssSpec gs;
  gs.seed = 21;
  const std::vector<PositionFix> fixes = gnss_fixes(sc.truth, gs);
  const MqnRegressor oracle = oracle_regressor(sc.truth, 0.1, 0.05);
  const FusionConfig cfg = default_fusion_config(RunMode::kInsGnssMqn, Platform::kQuadrotor,
                                                 initial_state(sc), noise_config(es));
  const FusionResult a = run_fusion(noisy, fixes, oracle, cfg);
  const FusionResult b = run_fusion(noisy, fixes, oracle, cfg);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    ASSERT_EQ(a.states[i].p, b.states[i].p);
  }
}

}  // namespace
}  // namespace ptnav
