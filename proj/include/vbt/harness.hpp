#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "vbt/control.hpp"
#include "vbt/estimator.hpp"
#include "vbt/extraction.hpp"
#include "vbt/nmpc.hpp"
#include "vbt/plant.hpp"

namespace vbt {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr double kControlRate = 50.0;  // Hz
inline constexpr double kSensorRate = 15.0;   // Hz

enum class ControllerKind { Coupled, Decoupled, Mpc };
enum class FeedbackMode { Oracle, ImageLoop };

const char* to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);
const char* to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& name);

/// Start of the run relative to the contour: the camera looks straight down at
/// the path point at `arclength`, shifted sideways (left of the tangent) by
/// `lateral` and turned by `yaw`, then pitched about its own y axis.
struct StartPose {
  double arclength = 0.0;
  double lateral = 0.0;  // m
  double yaw = 0.0;      // rad
  double pitch = 0.0;    // rad
  double depth = 0.0195;  // m, optical centre above the surface
};

struct NoiseConfig {
  double feature_px = 0.0;  // std of u, v
  double depth_m = 0.0;     // std of Z
  double image_m = 0.0;     // rendered depth image (image_loop)
};

struct Scenario {
  int schema = kScenarioSchemaVersion;
  std::string name = "unnamed";
  WorldModel world;
  StartPose start;
  ControllerKind controller = ControllerKind::Mpc;
  ControllerGains gains = ControllerGains::defaults();
  ContourReference reference = ContourReference::defaults();
  SolverOptions solver;
  /// The MPC plans from the estimate with its endpoints moved this many px
  /// inside the constrained border band.
  double mpc_anchor_inset = 50.0;
  FeedbackMode feedback = FeedbackMode::Oracle;
  Extractor extractor = Extractor::TSaLF;
  /// image_loop: the run stops after this many consecutive failed extractions.
  int max_missed_frames = 8;
  NoiseConfig noise;
  EkfConfig ekf = EkfConfig::defaults();
  bool ekf_enabled = true;
  /// The filter restarts from the frame when the innovation NIS exceeds this.
  double ekf_reset_nis = 100.0;
  std::vector<Disturbance> disturbances;
  double duration = 30.0;  // s
  std::uint64_t seed = 1;
  CameraIntrinsics camera;

  /// Throws ScenarioInvalid naming the offending field.
  void validate() const;
  Pose initial_pose() const;
  long num_ticks() const;
};

nlohmann::json to_json(const Scenario& s);
/// Missing fields keep their defaults; unknown fields and wrong types throw
/// ScenarioInvalid with the JSON path of the field.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical JSON of the scenario.
std::uint64_t scenario_hash(const Scenario& s);
/// Same, over the fields that define the task (world, start, noise,
/// disturbances, duration, feedback) but not the controller or its tuning.
std::uint64_t scenario_family_hash(const Scenario& s);

/// "straight", "s-shape", "hexagon" with a controller suffix, e.g. "straight-mpc".
/// "s-shape-disturbed-<ctl>" adds the +5 mm lateral offset at 15 s.
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();
/// The five declared S-shape starts: 0, +-2 mm lateral, +-0.05 rad yaw.
std::vector<StartPose> s_shape_starts();

enum class Termination { Duration, NoContact, FeatureLoss, PathComplete, SolverFailure };
const char* to_string(Termination t);

struct LogRow {
  long tick = 0;
  double time = 0.0;
  Vector10d truth = Vector10d::Zero();     // zero when out of contact
  Vector10d estimate = Vector10d::Zero();  // what the controller used
  Eigen::Vector4d xi_error = Eigen::Vector4d::Zero();  // xi_d - xi (true)
  double error_w = 0.0;                                // |xi_error|_W
  Vector6d command = Vector6d::Zero();                 // clipped twist
  Eigen::Vector3d sensor_xy_yaw = Eigen::Vector3d::Zero();  // world x, y and heading of the camera x axis
  double arclength = 0.0;
  bool measurement = false;  // a feature frame arrived this tick
  bool contact = false;
  // solver diagnostics (MPC only)
  double kkt_residual = 0.0;
  int sqp_iterations = 0;
  double slack_max = 0.0;
  int active_bounds = 0;
  // constraint flags, evaluated on the true state
  bool delta_violation = false;
  bool fov_violation = false;
  bool input_violation = false;
};

struct RunLog {
  std::vector<LogRow> rows;
  /// Wall-clock solve times, kept out of the CSV so that logs are reproducible.
  std::vector<double> solve_times_ms;
  /// Feature frames as delivered to the estimator (time and endpoints).
  std::vector<TimedMeasurement> frames;
  /// World polyline of the contour, for plotting.
  std::vector<Eigen::Vector2d> contour;
};

struct RunMetrics {
  std::string scenario;
  ControllerKind controller = ControllerKind::Mpc;
  std::uint64_t scenario_hash = 0;
  std::uint64_t family_hash = 0;
  std::uint64_t seed = 0;
  Eigen::Vector4d rmse = Eigen::Vector4d::Zero();  // r_e, beta_e, alpha_e, delta_e over in-contact ticks
  double settling_time = 0.0;  // s; the run length when it never settles
  bool settled = false;
  double v_x_steady = 0.0;     // mean commanded v_x over the final 10 s
  bool contact_maintained = true;
  double completion = 0.0;
  double solve_time_mean_ms = 0.0;
  double solve_time_std_ms = 0.0;
  double slack_max = 0.0;
  int constraint_violations = 0;  // in-contact ticks with a delta or FoV violation
  int input_violations = 0;
  int missed_frames = 0;
  int ekf_resets = 0;
  Termination termination = Termination::Duration;
  std::string failure;  // message of a controller or solver failure
  long ticks = 0;
};

struct RunResult {
  RunLog log;
  RunMetrics metrics;
};

/// Deterministic 50 Hz closed loop with 15 Hz feature frames.
RunResult run_scenario(const Scenario& s);

/// Settling time of a log: first time after which |xi_e|_W stays below
/// `fraction` of its initial value. Returns false when it never settles.
bool settling_time(const std::vector<LogRow>& rows, double fraction, double* t);

nlohmann::json to_json(const RunMetrics& m);
void write_csv(const RunLog& log, std::ostream& out);
void write_csv(const RunLog& log, const std::filesystem::path& path);
std::vector<std::string> csv_columns();

struct PairDelta {
  int a = 0, b = 0;
  double settling_time = 0.0;        // a - b
  Eigen::Vector4d rmse_log_ratio;    // log(a / b) per feature
  double completion = 0.0;           // a - b
  double v_x_steady = 0.0;           // a - b
};

struct ComparisonReport {
  std::vector<RunMetrics> runs;
  std::vector<PairDelta> deltas;  // every pair a < b
  std::string table() const;
};

/// Throws MismatchedScenarios unless all runs share the scenario family and
/// there are at least two.
ComparisonReport compare_runs(const std::vector<RunMetrics>& runs);

/// errors.svg, twist.svg and trajectory.svg in out_dir. Throws IoFailure.
std::vector<std::filesystem::path> emit_plots(const RunLog& log, const std::filesystem::path& out_dir);

}  // namespace vbt
