#include "vbt/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

namespace vbt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Measurement {
  PointFeature p1, p2;
};

class FeatureSource {
 public:
  explicit FeatureSource(const Scenario& s) : s_(s), rng_(s.seed) {}

  std::optional<Measurement> measure(const SensorState& sensor, const TactileState& truth, long frame) {
    if (s_.feedback == FeedbackMode::Oracle) {
      Measurement m{truth.p1, truth.p2};
      for (PointFeature* p : {&m.p1, &m.p2}) {
        p->u += s_.noise.feature_px * gauss_(rng_);
        p->v += s_.noise.feature_px * gauss_(rng_);
        p->depth += s_.noise.depth_m * gauss_(rng_);
      }
      return m;
    }
    const std::uint64_t seed = splitmix64(s_.seed ^ splitmix64(static_cast<std::uint64_t>(frame)));
    const DepthImage img = render_depth_image(sensor, s_.world, s_.camera, s_.noise.image_m, seed);
    try {
      const ExtractedLine line = extract(s_.extractor, img);
      const auto [p1, p2] = line_to_features(line, img, s_.camera);
      return Measurement{p1, p2};
    } catch (const Error&) {
      return std::nullopt;
    }
  }

 private:
  const Scenario& s_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

/// Feature estimate fed to the controller: EKF mean or the last frame held.
class Estimator {
 public:
  explicit Estimator(const Scenario& s) : s_(s) {}

  bool ready() const { return ekf_.has_value() || held_.has_value(); }

  void predict(const Vector6d& u, double dt) {
    if (ekf_) ekf_ = vbt::predict(*ekf_, Twist::from_vector(u), dt, s_.camera, s_.ekf);
  }

  /// Returns false when the frame is unusable (degenerate segment).
  bool correct(const Measurement& m) {
    TactileState z;
    try {
      z = {m.p1, m.p2, contour_from_points(m.p1, m.p2, s_.camera)};
    } catch (const Error&) {
      return false;
    }
    if (!s_.ekf_enabled) {
      held_ = z;
      return true;
    }
    if (ekf_) {
      UpdateInfo info;
      const EkfState next = update(reanchor(*ekf_, s_.camera, s_.ekf), m.p1, m.p2, s_.camera, s_.ekf, &info);
      // A jump this large is a different line (a corner), not noise: restart from the frame.
      if (info.nis <= s_.ekf_reset_nis) {
        ekf_ = next;
        return true;
      }
      ++resets_;
    }
    {
      EkfState init;
      init.mean = z.vector();
      init.covariance = Matrix10d::Zero();
      const Matrix6d& r = s_.ekf.measurement_noise;
      init.covariance.block<3, 3>(0, 0) = r.block<3, 3>(0, 0);
      init.covariance.block<3, 3>(3, 3) = r.block<3, 3>(3, 3);
      init.covariance.block<4, 4>(6, 6) = Eigen::Vector4d(1e-6, 1e-2, 1e-2, 1e-8).asDiagonal();
      ekf_ = init;
      return true;
    }
  }

  int resets() const { return resets_; }

  TactileState state() const { return ekf_ ? TactileState::from_vector(ekf_->mean) : *held_; }

 private:
  const Scenario& s_;
  std::optional<EkfState> ekf_;
  std::optional<TactileState> held_;
  int resets_ = 0;
};

class Controller {
 public:
  explicit Controller(const Scenario& s) : s_(s) {}

  /// Raw (unclipped) command.
  Vector6d command(const TactileState& x, LogRow& row, std::vector<double>& solve_times) {
    const ContourReference& ref = s_.reference;
    switch (s_.controller) {
      case ControllerKind::Coupled: return coupled_servo(x, ref, s_.gains, s_.camera).vector();
      case ControllerKind::Decoupled: return decoupled_servo(x, ref, s_.gains, s_.camera).vector();
      case ControllerKind::Mpc: break;
    }
    TactileState x0;
    try {
      x0 = anchor_on_border(x, s_.camera, kBorderMarginPx + s_.mpc_anchor_inset);
    } catch (const Error&) {
      x0 = shrink_about_midpoint(x, s_.camera, 0.5);
    }
    const auto [u_d, xi_d] = mpc_reference(contour_error(ref.xi_d, x.xi), ref);
    const MpcProblem problem = MpcProblem::from_gains(s_.gains, x0.vector(), u_d, xi_d);
    MpcSolution sol = solve(problem, warm_ ? &*warm_ : nullptr, s_.solver);
    row.kkt_residual = sol.kkt_residual;
    row.sqp_iterations = sol.sqp_iterations;
    row.slack_max = sol.slack_max;
    row.active_bounds = sol.active_bounds;
    solve_times.push_back(sol.solve_time_ms);
    const Vector6d u = sol.inputs.front();
    warm_ = std::move(sol);
    return u;
  }

 private:
  const Scenario& s_;
  std::optional<MpcSolution> warm_;
};

bool outside(double value, double lo, double hi) { return value < lo || value > hi; }

void flag_constraints(const Scenario& s, const TactileState& truth, LogRow& row) {
  const Vector10d x = truth.vector();
  const Vector10d& lo = s.gains.state_lower;
  const Vector10d& hi = s.gains.state_upper;
  row.delta_violation = outside(x(9), lo(9), hi(9));
  for (int i : {0, 1, 3, 4}) {
    // endpoints sit on the margin band; allow for its rounding
    if (outside(x(i), lo(i) - 1e-9, hi(i) + 1e-9)) row.fov_violation = true;
  }
}

RunMetrics summarize(const Scenario& s, const RunLog& log, Termination term, const std::string& failure,
                     int missed, int resets) {
  RunMetrics m;
  m.scenario = s.name;
  m.controller = s.controller;
  m.scenario_hash = scenario_hash(s);
  m.family_hash = scenario_family_hash(s);
  m.seed = s.seed;
  m.termination = term;
  m.failure = failure;
  m.missed_frames = missed;
  m.ekf_resets = resets;
  m.contact_maintained = term != Termination::NoContact;
  m.ticks = static_cast<long>(log.rows.size());
  if (log.rows.empty()) return m;

  Eigen::Vector4d sq = Eigen::Vector4d::Zero();
  int in_contact = 0;
  for (const LogRow& r : log.rows) {
    if (!r.contact) continue;
    ++in_contact;
    sq += r.xi_error.cwiseAbs2();
    if (r.delta_violation || r.fov_violation) ++m.constraint_violations;
    if (r.input_violation) ++m.input_violations;
    m.slack_max = std::max(m.slack_max, r.slack_max);
  }
  if (in_contact > 0) m.rmse = (sq / in_contact).cwiseSqrt();

  const double dt = 1.0 / kControlRate;
  const double t_end = log.rows.back().time + dt;
  m.settled = settling_time(log.rows, 0.02, &m.settling_time);
  if (!m.settled) m.settling_time = t_end;

  double vx = 0.0;
  int count = 0;
  for (const LogRow& r : log.rows) {
    if (r.time >= t_end - 10.0 - 1e-9) {
      vx += r.command(0);
      ++count;
    }
  }
  m.v_x_steady = count ? vx / count : 0.0;

  const double s0 = s.start.arclength;
  const double span = s.world.contour.total_length() - s0;
  m.completion = term == Termination::PathComplete ? 1.0
                                                   : std::clamp((log.rows.back().arclength - s0) / span, 0.0, 1.0);

  if (!log.solve_times_ms.empty()) {
    double sum = 0.0, sum2 = 0.0;
    for (double t : log.solve_times_ms) sum += t;
    m.solve_time_mean_ms = sum / log.solve_times_ms.size();
    for (double t : log.solve_times_ms) sum2 += (t - m.solve_time_mean_ms) * (t - m.solve_time_mean_ms);
    m.solve_time_std_ms = std::sqrt(sum2 / log.solve_times_ms.size());
  }
  return m;
}

}  // namespace

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Duration: return "duration";
    case Termination::NoContact: return "no_contact";
    case Termination::FeatureLoss: return "feature_loss";
    case Termination::PathComplete: return "path_complete";
    case Termination::SolverFailure: return "solver_failure";
  }
  return "duration";
}

RunResult run_scenario(const Scenario& s) {
  s.validate();
  const CameraIntrinsics& k = s.camera;
  const ContourPath& path = s.world.contour;
  const double dt = 1.0 / kControlRate;
  const long n = s.num_ticks();

  RunResult out;
  RunLog& log = out.log;
  log.contour = path.vertices();
  log.rows.reserve(static_cast<std::size_t>(n));

  SensorState sensor{s.initial_pose(), 0.0};
  DisturbanceSchedule schedule(s.disturbances);
  FeatureSource source(s);
  Estimator estimator(s);
  Controller controller(s);

  Vector6d command = Vector6d::Zero();
  double arclength = s.start.arclength;
  long frame = 0;
  int missed = 0, consecutive_missed = 0;
  Termination term = Termination::Duration;
  std::string failure;

  for (long i = 0; i < n; ++i) {
    LogRow row;
    row.tick = i;
    row.time = static_cast<double>(i) * dt;
    if (i > 0) sensor = apply_twist(sensor, Twist::from_vector(command), dt);

    const Eigen::Vector3d& c = sensor.pose.translation;
    const Eigen::Vector3d cam_x = sensor.pose.rotation.col(0);
    row.sensor_xy_yaw = {c.x(), c.y(), std::atan2(cam_x.y(), cam_x.x())};
    arclength = path.closest_arclength(c.head<2>(), arclength, 0.01);
    row.arclength = arclength;

    const GroundTruth gt = ground_truth_features(sensor, s.world, k);
    if (!gt.in_contact()) {
      log.rows.push_back(row);
      term = Termination::NoContact;
      break;
    }
    const TactileState& truth = *gt.state;
    row.contact = true;
    row.truth = truth.vector();
    row.xi_error = contour_error(s.reference.xi_d, truth.xi);
    row.error_w = std::sqrt(row.xi_error.dot(s.reference.weight_w * row.xi_error));
    flag_constraints(s, truth, row);

    if (i > 0) estimator.predict(command, dt);
    if (nearest_tick(static_cast<double>(frame) / kSensorRate, kControlRate) <= i) {
      row.measurement = true;
      const std::optional<Measurement> m = source.measure(sensor, truth, frame);
      ++frame;
      if (m) log.frames.push_back({row.time, m->p1, m->p2});
      if (m && estimator.correct(*m)) {
        consecutive_missed = 0;
      } else {
        ++missed;
        ++consecutive_missed;
      }
    }
    if (consecutive_missed >= s.max_missed_frames) {
      log.rows.push_back(row);
      term = Termination::FeatureLoss;
      break;
    }

    Vector6d raw = Vector6d::Zero();
    if (estimator.ready()) {
      const TactileState x = estimator.state();
      row.estimate = x.vector();
      try {
        raw = controller.command(x, row, log.solve_times_ms);
      } catch (const Error& e) {
        failure = e.what();
        log.rows.push_back(row);
        term = Termination::SolverFailure;
        break;
      }
    }
    const Vector6d& lo = s.gains.input_lower;
    const Vector6d& hi = s.gains.input_upper;
    row.input_violation = !raw.allFinite() || (raw.array() < lo.array()).any() || (raw.array() > hi.array()).any();
    command = raw.allFinite() ? Vector6d(raw.cwiseMax(lo).cwiseMin(hi)) : Vector6d::Zero();
    row.command = command;

    sensor = schedule.apply_due(sensor, row.time, dt);
    log.rows.push_back(row);

    if (arclength >= path.total_length() - 1e-9) {
      term = Termination::PathComplete;
      break;
    }
  }
  out.metrics = summarize(s, log, term, failure, missed, estimator.resets());
  return out;
}

bool settling_time(const std::vector<LogRow>& rows, double fraction, double* t) {
  if (rows.empty()) return false;
  const double threshold = fraction * rows.front().error_w;
  long last_above = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].contact || rows[i].error_w >= threshold) last_above = static_cast<long>(i);
  }
  if (rows.front().error_w == 0.0 && last_above < 0) {
    *t = rows.front().time;
    return true;
  }
  if (last_above + 1 >= static_cast<long>(rows.size())) return false;
  *t = rows[static_cast<std::size_t>(last_above + 1)].time;
  return true;
}

nlohmann::json to_json(const RunMetrics& m) {
  char hash[17], family[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.scenario_hash));
  std::snprintf(family, sizeof family, "%016llx", static_cast<unsigned long long>(m.family_hash));
  return {
      {"scenario", m.scenario},
      {"controller", to_string(m.controller)},
      {"scenario_hash", hash},
      {"family_hash", family},
      {"seed", m.seed},
      {"rmse", {{"r_e", m.rmse(0)}, {"beta_e", m.rmse(1)}, {"alpha_e", m.rmse(2)}, {"delta_e", m.rmse(3)}}},
      {"settling_time", m.settling_time},
      {"settled", m.settled},
      {"v_x_steady", m.v_x_steady},
      {"contact_maintained", m.contact_maintained},
      {"completion", m.completion},
      {"solve_time_mean_ms", m.solve_time_mean_ms},
      {"solve_time_std_ms", m.solve_time_std_ms},
      {"slack_max", m.slack_max},
      {"constraint_violations", m.constraint_violations},
      {"input_violations", m.input_violations},
      {"missed_frames", m.missed_frames},
      {"ekf_resets", m.ekf_resets},
      {"termination", to_string(m.termination)},
      {"failure", m.failure},
      {"ticks", m.ticks},
  };
}

std::vector<std::string> csv_columns() {
  std::vector<std::string> cols = {"tick", "time"};
  const char* state[] = {"u1", "v1", "z1", "u2", "v2", "z2", "r", "beta", "alpha", "delta"};
  for (const char* prefix : {"true_", "est_"}) {
    for (const char* name : state) cols.push_back(std::string(prefix) + name);
  }
  for (const char* name : {"e_r", "e_beta", "e_alpha", "e_delta", "error_w", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z",
                           "sensor_x", "sensor_y", "sensor_yaw", "arclength", "measurement", "contact",
                           "kkt_residual", "sqp_iterations", "slack_max", "active_bounds", "delta_violation",
                           "fov_violation", "input_violation"}) {
    cols.push_back(name);
  }
  return cols;
}

void write_csv(const RunLog& log, std::ostream& out) {
  const auto cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const LogRow& r : log.rows) {
    out << r.tick;
    num(r.time);
    for (int i = 0; i < 10; ++i) num(r.truth(i));
    for (int i = 0; i < 10; ++i) num(r.estimate(i));
    for (int i = 0; i < 4; ++i) num(r.xi_error(i));
    num(r.error_w);
    for (int i = 0; i < 6; ++i) num(r.command(i));
    for (int i = 0; i < 3; ++i) num(r.sensor_xy_yaw(i));
    num(r.arclength);
    out << ',' << r.measurement << ',' << r.contact;
    num(r.kkt_residual);
    out << ',' << r.sqp_iterations;
    num(r.slack_max);
    out << ',' << r.active_bounds << ',' << r.delta_violation << ',' << r.fov_violation << ',' << r.input_violation
        << '\n';
  }
}

void write_csv(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  write_csv(log, out);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

ComparisonReport compare_runs(const std::vector<RunMetrics>& runs) {
  if (runs.size() < 2) throw Error(ErrorCode::MismatchedScenarios, "need at least two runs to compare");
  for (const RunMetrics& m : runs) {
    if (m.family_hash != runs.front().family_hash) {
      throw Error(ErrorCode::MismatchedScenarios, "'" + m.scenario + "' and '" + runs.front().scenario +
                                                      "' are different scenarios");
    }
  }
  ComparisonReport report;
  report.runs = runs;
  for (int a = 0; a < static_cast<int>(runs.size()); ++a) {
    for (int b = a + 1; b < static_cast<int>(runs.size()); ++b) {
      PairDelta d;
      d.a = a;
      d.b = b;
      d.settling_time = runs[a].settling_time - runs[b].settling_time;
      for (int i = 0; i < 4; ++i) d.rmse_log_ratio(i) = std::log((runs[a].rmse(i) + 1e-300) / (runs[b].rmse(i) + 1e-300));
      d.completion = runs[a].completion - runs[b].completion;
      d.v_x_steady = runs[a].v_x_steady - runs[b].v_x_steady;
      report.deltas.push_back(d);
    }
  }
  return report;
}

std::string ComparisonReport::table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-10s %10s %10s %10s %10s %9s %9s %7s %6s %9s\n", "scenario", "controller",
                "rmse_r", "rmse_beta", "rmse_alpha", "rmse_delta", "settle_s", "v_x", "contact", "compl", "solve_ms");
  out << buf;
  for (const RunMetrics& m : runs) {
    std::snprintf(buf, sizeof buf, "%-28s %-10s %10.3e %10.3e %10.3e %10.3e %9.2f %9.5f %7s %6.3f %9.2f\n",
                  m.scenario.c_str(), to_string(m.controller), m.rmse(0), m.rmse(1), m.rmse(2), m.rmse(3),
                  m.settling_time, m.v_x_steady, m.contact_maintained ? "yes" : "no", m.completion,
                  m.solve_time_mean_ms);
    out << buf;
  }
  for (const PairDelta& d : deltas) {
    std::snprintf(buf, sizeof buf,
                  "%s - %s: settling %+.2f s, log rmse ratio r %+.3f beta %+.3f alpha %+.3f delta %+.3f, "
                  "completion %+.3f\n",
                  runs[d.a].scenario.c_str(), runs[d.b].scenario.c_str(), d.settling_time, d.rmse_log_ratio(0),
                  d.rmse_log_ratio(1), d.rmse_log_ratio(2), d.rmse_log_ratio(3), d.completion);
    out << buf;
  }
  return out.str();
}

}  // namespace vbt
