#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptnav/csv.hpp"
#include "ptnav/deadreck.hpp"
#include "ptnav/experiments.hpp"
#include "ptnav/fusion.hpp"
#include "ptnav/metrics.hpp"
#include "ptnav/model_io.hpp"
#include "ptnav/nn.hpp"
#include "ptnav/simgen.hpp"
#include "ptnav/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ptnav;

namespace {

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path + ": cannot open");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return j;
}

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError(tmp.string() + ": cannot open for writing");
    os << j.dump(2) << '\n';
    if (!os.good()) throw IoError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

json default_sim_json() {
  const TrajectorySpec t = TrajectorySpec::quadrotor_default();
  const SensorErrorSpec es = SensorErrorSpec::movella();
  const GnssSpec gs;
  return json{
      {"platform", to_string(t.platform)},
      {"kind", to_string(t.kind)},
      {"speed", t.speed},
      {"duration", t.duration},
      {"amplitude", t.amplitude},
      {"period", t.period},
      {"amplitude_jitter", t.amplitude_jitter},
      {"period_jitter", t.period_jitter},
      {"heading", t.heading},
      {"altitude_amplitude", t.altitude_amplitude},
      {"altitude_period", t.altitude_period},
      {"seed", t.seed},
      {"sensors",
       {{"accel_noise_density", es.accel_noise_density},
        {"accel_bias_rw", es.accel_bias_rw},
        {"accel_turnon_sigma", es.accel_turnon_sigma},
        {"gyro_noise_density", es.gyro_noise_density},
        {"gyro_bias_rw", es.gyro_bias_rw},
        {"gyro_turnon_sigma", es.gyro_turnon_sigma},
        {"rate", es.rate},
        {"seed", es.seed}}},
      {"gnss",
       {{"rate", gs.rate}, {"sigma", gs.sigma}, {"seed", gs.seed}, {"outages", json::array()}}},
  };
}

TrajectorySpec trajectory_from_json(const json& j) {
  TrajectorySpec t;
  t.platform = platform_by_name(j.at("platform").get<std::string>());
  t.kind = trajectory_kind_by_name(j.at("kind").get<std::string>());
  t.speed = j.at("speed").get<double>();
  t.duration = j.at("duration").get<double>();
  t.amplitude = j.at("amplitude").get<double>();
  t.period = j.at("period").get<double>();
  t.amplitude_jitter = j.at("amplitude_jitter").get<double>();
  t.period_jitter = j.at("period_jitter").get<double>();
  t.heading = j.at("heading").get<double>();
  t.altitude_amplitude = j.at("altitude_amplitude").get<double>();
  t.altitude_period = j.at("altitude_period").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

SensorErrorSpec sensors_from_json(const json& j) {
  SensorErrorSpec es;
  es.accel_noise_density = j.at("accel_noise_density").get<double>();
  es.accel_bias_rw = j.at("accel_bias_rw").get<double>();
  es.accel_turnon_sigma = j.at("accel_turnon_sigma").get<double>();
  es.gyro_noise_density = j.at("gyro_noise_density").get<double>();
  es.gyro_bias_rw = j.at("gyro_bias_rw").get<double>();
  es.gyro_turnon_sigma = j.at("gyro_turnon_sigma").get<double>();
  es.rate = j.at("rate").get<double>();
  es.seed = j.at("seed").get<std::uint64_t>();
  return es;
}

GnssSpec gnss_from_json(const json& j) {
  GnssSpec gs;
  gs.rate = j.at("rate").get<double>();
  gs.sigma = j.at("sigma").get<double>();
  gs.seed = j.at("seed").get<std::uint64_t>();
  for (const json& o : j.at("outages")) {
    gs.outages.emplace_back(o.at(0).get<double>(), o.at(1).get<double>());
  }
  return gs;
}

std::pair<double, double> parse_outage(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ValidationError("--gnss-outage expects start:end, got '" + text + "'");
  }
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ValidationError("--gnss-outage expects numbers, got '" + text + "'");
  }
}

struct SimulateArgs {
  std::string out;
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> platform;
  std::optional<std::string> kind;
  std::optional<double> speed, duration, amplitude, period, gnss_sigma, gnss_rate;
  std::optional<std::string> gnss_outage;
};

int cmd_simulate(const SimulateArgs& a) {
  json cfg = default_sim_json();
  if (!a.spec_path.empty()) cfg.merge_patch(load_json(a.spec_path));
  if (a.platform) cfg["platform"] = *a.platform;
  if (a.kind) cfg["kind"] = *a.kind;
  if (a.speed) cfg["speed"] = *a.speed;
  if (a.duration) cfg["duration"] = *a.duration;
  if (a.amplitude) cfg["amplitude"] = *a.amplitude;
  if (a.period) cfg["period"] = *a.period;
  if (a.gnss_sigma) cfg["gnss"]["sigma"] = *a.gnss_sigma;
  if (a.gnss_rate) cfg["gnss"]["rate"] = *a.gnss_rate;
  if (a.seed) {
    cfg["seed"] = *a.seed;
    cfg["sensors"]["seed"] = *a.seed + 1;
    cfg["gnss"]["seed"] = *a.seed + 2;
  }
  if (a.gnss_outage) {
    const auto [s, e] = parse_outage(*a.gnss_outage);
    cfg["gnss"]["outages"] = json::array({json::array({s, e})});
  }

  const TrajectorySpec spec = trajectory_from_json(cfg);
  const SensorErrorSpec es = sensors_from_json(cfg["sensors"]);
  const GnssSpec gs = gnss_from_json(cfg["gnss"]);
  spec.validate();
  es.validate();
  gs.validate(spec.duration);

  const std::vector<TruthSample> truth = generate_truth(spec, 1.0 / es.rate);
  const std::vector<ImuSample> noisy = corrupt(inverse_imu(truth), es);
  const std::vector<PositionFix> fixes = gnss_fixes(truth, gs);

  fs::create_directories(a.out);
  write_gt_csv((fs::path(a.out) / "truth.csv").string(), position_records(truth));
  write_imu_csv((fs::path(a.out) / "imu.csv").string(), noisy);
  write_fixes_csv((fs::path(a.out) / "fixes.csv").string(), fixes);
  write_json(fs::path(a.out) / "config.json", cfg);
  std::cout << "wrote " << truth.size() << " truth rows, " << noisy.size() << " imu rows, "
            << fixes.size() << " fixes to " << a.out << "\n";
  return 0;
}

std::vector<TruthSample> truth_from_records(const std::vector<PositionRecord>& recs) {
  std::vector<TruthSample> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    out[i].t = recs[i].t;
    out[i].p = recs[i].p;
    if (recs[i].yaw) out[i].att = Attitude::from_yaw(*recs[i].yaw);
  }
  return out;
}

std::vector<fs::path> find_run_dirs(const std::string& data) {
  const fs::path root(data);
  if (fs::exists(root / "imu.csv")) return {root};
  std::vector<fs::path> dirs;
  if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && fs::exists(entry.path() / "imu.csv") &&
          fs::exists(entry.path() / "truth.csv")) {
        dirs.push_back(entry.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw ValidationError(data + ": no run directory with imu.csv and truth.csv found");
  }
  return dirs;
}

struct TrainArgs {
  std::string data;
  std::string target = "distance";
  std::string out;
  std::string preset = "mini";
  std::string history;
  int epochs = 70;
  int stride = 60;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
  const RegressionTarget target = a.target == "altitude" ? RegressionTarget::kAltitude
                                  : a.target == "distance"
                                      ? RegressionTarget::kDistance
                                      : throw ValidationError("unknown target: " + a.target);
  std::vector<LabeledWindow> data;
  for (const fs::path& dir : find_run_dirs(a.data)) {
    const std::vector<ImuSample> imu = read_imu_csv((dir / "imu.csv").string());
    const std::vector<TruthSample> truth =
        truth_from_records(read_gt_csv((dir / "truth.csv").string()));
    std::vector<Window> windows = make_windows(imu, kDefaultWindow, a.stride);
    attach_ground_truth(windows, truth);
    for (const Window& w : windows) {
      LabeledWindow lw;
      lw.x = center_rows(w.tensor);
      lw.label = target == RegressionTarget::kDistance ? oracle_distance(w) : oracle_altitude(w);
      data.push_back(std::move(lw));
    }
  }
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.train_stride = a.stride;
  tc.seed = a.seed;
  RegressorModel model = preset_by_name(a.preset, kDefaultWindow, target);
  const TrainResult result = train(std::move(model), data, tc);
  if (!a.out.empty()) {
    if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty()) {
      fs::create_directories(parent);
    }
    save_model(a.out, result.model);
  }
  if (!a.history.empty()) write_history_csv(a.history, result.history);
  std::cout << "trained " << a.preset << " (" << result.model.parameter_count()
            << " params) on " << data.size() << " windows; validation drmse "
            << result.model.validation_drmse << " m\n";
  return 0;
}

struct FuseArgs {
  std::string data;
  std::string out;
  std::string mode = "INS_GNSS";
  std::string platform;
  std::string model;
  std::string altitude_model;
  std::string gnss_outage;
  std::string run_id;
};

Vec3 initial_velocity(const std::vector<TruthSample>& truth) {
  if (truth.size() < 3) return Vec3::Zero();
  const double dt = truth[1].t - truth[0].t;
  return (-3.0 * truth[0].p + 4.0 * truth[1].p - truth[2].p) / (2.0 * dt);
}

int cmd_fuse(const FuseArgs& a) {
  const fs::path dir(a.data);
  const std::vector<ImuSample> imu = read_imu_csv((dir / "imu.csv").string());
  const std::vector<TruthSample> truth =
      truth_from_records(read_gt_csv((dir / "truth.csv").string()));
  const RunMode mode = run_mode_by_name(a.mode);

  std::string platform_name = a.platform;
  json data_cfg;
  if (fs::exists(dir / "config.json")) data_cfg = load_json((dir / "config.json").string());
  if (platform_name.empty()) {
    platform_name =
        data_cfg.contains("platform") ? data_cfg["platform"].get<std::string>() : "quadrotor";
  }
  const Platform platform = platform_by_name(platform_name);

  std::vector<PositionFix> fixes;
  const bool needs_fixes = mode == RunMode::kInsGnss || mode == RunMode::kInsGnssMqn;
  if (needs_fixes) {
    fixes = read_fixes_csv((dir / "fixes.csv").string());
    if (!a.gnss_outage.empty()) {
      const auto [s, e] = parse_outage(a.gnss_outage);
      std::erase_if(fixes, [s, e](const PositionFix& f) { return f.t >= s && f.t < e; });
    }
  }

  MqnRegressor reg;
  const bool needs_model =
      mode == RunMode::kMqnDr || mode == RunMode::kMqnEkf || mode == RunMode::kInsGnssMqn;
  if (needs_model) {
    if (a.model.empty()) throw ValidationError("--model is required for regressor modes");
    const RegressorModel distance = load_model(a.model);
    if (platform == Platform::kQuadrotor) {
      if (a.altitude_model.empty()) {
        throw ValidationError("--altitude-model is required for the quadrotor");
      }
      reg = model_regressor(distance, load_model(a.altitude_model));
    } else {
      reg = model_regressor(distance);
    }
  }

  NavState initial;
  initial.t = truth.front().t;
  initial.p = truth.front().p;
  initial.v = initial_velocity(truth);
  initial.att = truth.front().att;
  const FusionConfig fc = default_fusion_config(mode, platform, initial,
                                                noise_config(SensorErrorSpec::movella()));
  const FusionResult res = run_fusion(imu, fixes, reg, fc);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  if (mode == RunMode::kMqnDr) {
    write_gt_csv((out / "estimate.csv").string(), position_records(res.dr_track));
  } else {
    write_gt_csv((out / "estimate.csv").string(), position_records(res.states));
  }

  std::vector<TimedPosition> gt;
  gt.reserve(truth.size());
  for (const TruthSample& s : truth) gt.push_back({s.t, s.p});
  std::vector<std::pair<double, double>> series;
  for (const auto& [ei, gi] : align_nearest(res.estimates, gt)) {
    series.emplace_back(gt[gi].t, (res.estimates[ei].p - gt[gi].p).norm());
  }
  write_error_series_csv((out / "error_series.csv").string(), series);

  RunRecord rec;
  rec.run_id = a.run_id.empty() ? fs::path(a.data).filename().string() + "_" + a.mode : a.run_id;
  rec.mode = a.mode;
  rec.platform = platform_name;
  rec.seed = data_cfg.contains("seed") ? data_cfg["seed"].get<std::uint64_t>() : 0;
  rec.rmse_m = rmse(res.estimates, gt);
  rec.max_error_m = max_error(res.estimates, gt);
  rec.duration_s = truth.back().t - truth.front().t;
  write_results_csv((out / "results.csv").string(), {rec});

  json cfg{{"mode", a.mode},
           {"platform", platform_name},
           {"data", a.data},
           {"model", a.model},
           {"altitude_model", a.altitude_model},
           {"gnss_outage", a.gnss_outage}};
  write_json(out / "config.json", cfg);

  std::cout << "rmse " << rec.rmse_m << " m, max error " << rec.max_error_m << " m ("
            << res.innovations.size() << " updates)\n";
  if (res.aborted) throw DivergenceError(res.abort_reason);
  return 0;
}

struct EvalArgs {
  std::string est;
  std::string gt;
  std::string out;
  std::string run_id = "eval";
  std::string mode;
  std::string platform;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<PositionRecord> est = read_gt_csv(a.est);
  const std::vector<PositionRecord> gt = read_gt_csv(a.gt);
  RunRecord rec;
  rec.run_id = a.run_id;
  rec.mode = a.mode;
  rec.platform = a.platform;
  rec.seed = 0;
  rec.rmse_m = rmse(timed_positions(est), timed_positions(gt));
  rec.max_error_m = max_error(timed_positions(est), timed_positions(gt));
  rec.duration_s = gt.empty() ? 0.0 : gt.back().t - gt.front().t;
  if (!a.out.empty()) {
    write_results_csv(a.out, {rec});
  }
  std::cout << "rmse " << rec.rmse_m << " m, max error " << rec.max_error_m << " m over "
            << est.size() << " estimate rows\n";
  return 0;
}

struct ExperimentArgs {
  std::string name;
  std::string out;
  ExperimentConfig cfg;
};

int cmd_experiment(const ExperimentArgs& a) {
  const ExperimentResult res = run_experiment(a.name, a.cfg);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  {
    const fs::path tmp = out / "results.csv.tmp";
    write_results_csv(tmp.string(), res.runs);
    fs::rename(tmp, out / "results.csv");
  }
  {
    const fs::path tmp = out / "summary.csv.tmp";
    write_summary_csv(tmp.string(), res.summary);
    fs::rename(tmp, out / "summary.csv");
  }
  if (!res.models.empty()) {
    fs::create_directories(out / "models");
    for (const auto& [name, model] : res.models) {
      save_model((out / "models" / (name + ".bin")).string(), model);
    }
  }
  write_json(out / "config.json",
             json{{"experiment", a.name},
                  {"seeds", a.cfg.seeds},
                  {"jobs", a.cfg.jobs},
                  {"seed", a.cfg.seed},
                  {"preset", a.cfg.preset},
                  {"epochs", a.cfg.epochs},
                  {"gnss_sigma", a.cfg.gnss_sigma},
                  {"gnss_rate", a.cfg.gnss_rate},
                  {"quad_trajectories", a.cfg.quad_trajectories},
                  {"robot_trajectories", a.cfg.robot_trajectories}});
  for (const SummaryEntry& e : res.summary) {
    std::cout << e.label << " " << e.metric << " = " << e.value << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inertial dead reckoning and fusion toolbox"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "synthesize truth, imu, and gnss csv files");
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--spec", sim.spec_path, "json spec file");
  c_sim->add_option("--seed", sim.seed, "master seed (trajectory, sensors, gnss)");
  c_sim->add_option("--platform", sim.platform, "quadrotor|robot");
  c_sim->add_option("--kind", sim.kind, "pts|straight");
  c_sim->add_option("--speed", sim.speed, "commanded speed m/s");
  c_sim->add_option("--duration", sim.duration, "trajectory duration s");
  c_sim->add_option("--amplitude", sim.amplitude, "lateral amplitude m");
  c_sim->add_option("--period", sim.period, "oscillation period s");
  c_sim->add_option("--gnss-sigma", sim.gnss_sigma, "gnss noise sigma m");
  c_sim->add_option("--gnss-rate", sim.gnss_rate, "gnss fix rate hz");
  c_sim->add_option("--gnss-outage", sim.gnss_outage, "outage interval start:end");

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "train a window regressor on simulated runs");
  c_train->add_option("--data", tr.data, "run directory or parent of run directories")->required();
  c_train->add_option("--target", tr.target, "distance|altitude");
  c_train->add_option("--out", tr.out, "output model file");
  c_train->add_option("--preset", tr.preset, "mini|baseline|tiny");
  c_train->add_option("--history", tr.history, "loss history csv path");
  c_train->add_option("--epochs", tr.epochs, "training epochs");
  c_train->add_option("--stride", tr.stride, "window stride in samples");
  c_train->add_option("--seed", tr.seed, "training seed");

  FuseArgs fu;
  CLI::App* c_fuse = app.add_subcommand("fuse", "run a trajectory estimate on a simulated run");
  c_fuse->add_option("--data", fu.data, "run directory from simulate")->required();
  c_fuse->add_option("--out", fu.out, "output directory")->required();
  c_fuse->add_option("--mode", fu.mode, "INS_only|INS_GNSS|MQN_DR|MQN_EKF|INS_GNSS_MQN");
  c_fuse->add_option("--platform", fu.platform, "quadrotor|robot (default from data config)");
  c_fuse->add_option("--model", fu.model, "distance model file");
  c_fuse->add_option("--altitude-model", fu.altitude_model, "altitude model file");
  c_fuse->add_option("--gnss-outage", fu.gnss_outage, "drop fixes in start:end");
  c_fuse->add_option("--run-id", fu.run_id, "row id for results.csv");

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "compare an estimate csv against ground truth");
  c_eval->add_option("--est", ev.est, "estimate csv (gt schema)")->required();
  c_eval->add_option("--gt", ev.gt, "ground truth csv")->required();
  c_eval->add_option("--out", ev.out, "results csv path");
  c_eval->add_option("--run-id", ev.run_id, "row id");
  c_eval->add_option("--mode", ev.mode, "mode column value");
  c_eval->add_option("--platform", ev.platform, "platform column value");

  ExperimentArgs ex;
  CLI::App* c_exp = app.add_subcommand("experiment", "run a full experiment recipe");
  c_exp->add_option("name", ex.name, "table2|table3|table4|fig8")->required();
  c_exp->add_option("--out", ex.out, "output directory")->required();
  c_exp->add_option("--seeds", ex.cfg.seeds, "monte carlo seeds");
  c_exp->add_option("--jobs", ex.cfg.jobs, "parallel evaluation threads");
  c_exp->add_option("--seed", ex.cfg.seed, "base seed");
  c_exp->add_option("--preset", ex.cfg.preset, "regressor preset");
  c_exp->add_option("--epochs", ex.cfg.epochs, "training epochs");
  c_exp->add_option("--gnss-sigma", ex.cfg.gnss_sigma, "gnss noise sigma m");
  c_exp->add_option("--gnss-rate", ex.cfg.gnss_rate, "gnss fix rate hz");
  c_exp->add_option("--quad-trajectories", ex.cfg.quad_trajectories, "training trajectories");
  c_exp->add_option("--robot-trajectories", ex.cfg.robot_trajectories, "training trajectories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_fuse->parsed()) return cmd_fuse(fu);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_exp->parsed()) return cmd_experiment(ex);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
