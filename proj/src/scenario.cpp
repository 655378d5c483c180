#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "vbt/harness.hpp"

namespace vbt {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ScenarioInvalid, path + ": " + what);
}

/// Reads the fields of one JSON object, remembering which keys were used so
/// that leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) out = as_number(*v, at(key));
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) invalid(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) invalid(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) invalid(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <int N>
  void vector(const std::string& key, Eigen::Matrix<double, N, 1>& out, double null_value = kInf) {
    if (const json* v = find(key)) out = as_vector<N>(*v, at(key), null_value);
  }
  /// Square matrix given either as its diagonal or as nested rows.
  template <int N>
  void matrix(const std::string& key, Eigen::Matrix<double, N, N>& out) {
    const json* v = find(key);
    if (!v) return;
    const std::string p = at(key);
    if (!v->is_array()) invalid(p, "expected an array");
    if (v->size() == static_cast<std::size_t>(N) && !v->empty() && !(*v)[0].is_array()) {
      out = as_vector<N>(*v, p, kInf).asDiagonal();
      return;
    }
    if (v->size() != static_cast<std::size_t>(N)) invalid(p, "expected " + std::to_string(N) + " rows");
    for (int i = 0; i < N; ++i) out.row(i) = as_vector<N>((*v)[i], p + "[" + std::to_string(i) + "]", kInf);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) invalid(at(it.key()), "unknown field");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) invalid(path, "expected a number");
    return v.get<double>();
  }

  template <int N>
  static Eigen::Matrix<double, N, 1> as_vector(const json& v, const std::string& path, double null_value) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
      invalid(path, "expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      // JSON has no infinity; null stands for an absent bound
      out(i) = v[i].is_null() ? null_value : as_number(v[i], path + "[" + std::to_string(i) + "]");
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename M>
json matrix_json(const M& m) {
  const bool diagonal = (m - M(m.diagonal().asDiagonal())).isZero(0.0);
  json out = json::array();
  if (diagonal) {
    for (int i = 0; i < m.rows(); ++i) out.push_back(m(i, i));
    return out;
  }
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

template <typename V>
json vector_json(const V& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) {
    if (std::isinf(v(i))) {
      out.push_back(nullptr);
    } else {
      out.push_back(v(i));
    }
  }
  return out;
}

json contour_json(const ContourPath::Params& p) {
  json c = {{"kind", to_string(p.kind)}, {"origin", {p.origin.x(), p.origin.y()}}, {"heading", p.heading}};
  switch (p.kind) {
    case ContourKind::Line: c["length"] = p.length; break;
    case ContourKind::SShape:
      c["length"] = p.length;
      c["amplitude"] = p.amplitude;
      c["wavelength"] = p.wavelength;
      break;
    case ContourKind::Hexagon: c["circumradius"] = p.circumradius; break;
    case ContourKind::Circle: c["radius"] = p.radius; break;
    case ContourKind::Polyline: {
      json v = json::array();
      for (const auto& q : p.vertices) v.push_back({q.x(), q.y()});
      c["vertices"] = v;
      break;
    }
  }
  return c;
}

ContourPath::Params contour_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ContourPath::Params p;
  std::string kind = to_string(p.kind);
  r.string("kind", kind);
  try {
    p.kind = contour_kind_from_string(kind);
  } catch (const Error&) {
    invalid(r.at("kind"), "unknown contour kind '" + kind + "'");
  }
  Eigen::Vector2d origin = p.origin;
  r.vector<2>("origin", origin);
  p.origin = origin;
  r.number("heading", p.heading);
  r.number("length", p.length);
  r.number("amplitude", p.amplitude);
  r.number("wavelength", p.wavelength);
  r.number("circumradius", p.circumradius);
  r.number("radius", p.radius);
  if (const json* v = r.find("vertices")) {
    if (!v->is_array()) invalid(r.at("vertices"), "expected an array of [x, y]");
    for (std::size_t i = 0; i < v->size(); ++i) {
      p.vertices.push_back(Reader::as_vector<2>((*v)[i], r.at("vertices") + "[" + std::to_string(i) + "]", 0.0));
    }
  }
  r.finish();
  return p;
}

template <typename Fn>
auto parse_enum(Reader& r, const std::string& key, const std::string& current, Fn fn) {
  std::string name = current;
  r.string(key, name);
  try {
    return fn(name);
  } catch (const Error&) {
    invalid(r.at(key), "unknown value '" + name + "'");
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) invalid(field, what);
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Coupled: return "coupled";
    case ControllerKind::Decoupled: return "decoupled";
    case ControllerKind::Mpc: return "mpc";
  }
  return "mpc";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  for (ControllerKind k : {ControllerKind::Coupled, ControllerKind::Decoupled, ControllerKind::Mpc}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::ScenarioInvalid, "unknown controller '" + name + "'");
}

const char* to_string(FeedbackMode mode) { return mode == FeedbackMode::Oracle ? "oracle" : "image_loop"; }

FeedbackMode feedback_mode_from_string(const std::string& name) {
  if (name == "oracle") return FeedbackMode::Oracle;
  if (name == "image_loop") return FeedbackMode::ImageLoop;
  throw Error(ErrorCode::ScenarioInvalid, "unknown feedback mode '" + name + "'");
}

void Scenario::validate() const {
  require(schema == kScenarioSchemaVersion, "schema", "unsupported schema version " + std::to_string(schema));
  require(std::isfinite(duration) && duration > 0.0, "duration", "must be > 0");
  require(mpc_anchor_inset >= 0.0, "mpc_anchor_inset", "must be >= 0");
  require(max_missed_frames >= 1, "max_missed_frames", "must be >= 1");
  require(ekf_reset_nis > 0.0, "ekf.reset_nis", "must be > 0");
  require(noise.feature_px >= 0.0 && noise.depth_m >= 0.0 && noise.image_m >= 0.0, "noise", "must be >= 0");
  require(start.depth > 0.0, "start.depth", "must be > 0");
  require(start.arclength >= 0.0 && start.arclength <= world.contour.total_length(), "start.arclength",
          "outside the contour");
  require(solver.max_sqp_iterations >= 1, "solver.max_sqp_iterations", "must be >= 1");
  require(gains.dt == 1.0 / kControlRate, "gains.dt", "must equal the control period 0.02 s");
  require(ekf.predict_rate == kControlRate && ekf.measure_rate == kSensorRate, "ekf", "rates are fixed at 50/15 Hz");
  for (std::size_t i = 0; i < disturbances.size(); ++i) {
    require(disturbances[i].time >= 0.0 && disturbances[i].offset.allFinite(),
            "disturbances[" + std::to_string(i) + "]", "needs a finite offset and time >= 0");
  }
  try {
    camera.validate();
    world.validate();
    gains.validate();
    reference.validate();
    ekf.validate();
  } catch (const Error& e) {
    invalid(name, e.what());
  }
}

Pose Scenario::initial_pose() const {
  const ContourPath& path = world.contour;
  const Eigen::Vector2d t = path.tangent_at(start.arclength);
  const Eigen::Vector2d left(-t.y(), t.x());
  const Eigen::Vector2d xy = path.point_at(start.arclength) + start.lateral * left;
  Pose pose = nominal_pose(world, xy, std::atan2(t.y(), t.x()) + start.yaw, start.depth);
  pose.rotation = pose.rotation * Eigen::AngleAxisd(start.pitch, Eigen::Vector3d::UnitY()).toRotationMatrix();
  return pose;
}

long Scenario::num_ticks() const { return std::lround(duration * kControlRate); }

json to_json(const Scenario& s) {
  const ControllerGains& g = s.gains;
  json disturbances = json::array();
  for (const auto& d : s.disturbances) disturbances.push_back({{"time", d.time}, {"offset", vector_json(d.offset)}});
  return {
      {"schema", s.schema},
      {"name", s.name},
      {"seed", s.seed},
      {"duration", s.duration},
      {"camera",
       {{"focal_length", s.camera.focal_length},
        {"pixel_pitch", s.camera.pixel_pitch},
        {"cu", s.camera.cu},
        {"cv", s.camera.cv},
        {"width", s.camera.width},
        {"height", s.camera.height}}},
      {"world",
       {{"contour", contour_json(s.world.contour.params())},
        {"surface", {{"z0", s.world.surface.z0}, {"gx", s.world.surface.gx}, {"gy", s.world.surface.gy}}},
        {"ridge_height", s.world.ridge_height},
        {"ridge_sigma", s.world.ridge_sigma}}},
      {"start",
       {{"arclength", s.start.arclength},
        {"lateral", s.start.lateral},
        {"yaw", s.start.yaw},
        {"pitch", s.start.pitch},
        {"depth", s.start.depth}}},
      {"controller", to_string(s.controller)},
      {"gains",
       {{"servo_gain", matrix_json(g.servo_gain)},
        {"damping", g.damping},
        {"k_z", g.k_z},
        {"k_alpha", g.k_alpha},
        {"q", matrix_json(g.q)},
        {"r", matrix_json(g.r)},
        {"horizon_steps", g.horizon_steps},
        {"dt", g.dt},
        {"state_lower", vector_json(g.state_lower)},
        {"state_upper", vector_json(g.state_upper)},
        {"input_lower", vector_json(g.input_lower)},
        {"input_upper", vector_json(g.input_upper)}}},
      {"reference",
       {{"xi_d", vector_json(s.reference.xi_d.vector())},
        {"v_x_max", s.reference.v_x_max},
        {"weight_w", matrix_json(s.reference.weight_w)}}},
      {"solver",
       {{"max_sqp_iterations", s.solver.max_sqp_iterations},
        {"kkt_tolerance", s.solver.kkt_tolerance},
        {"levenberg_shift", s.solver.levenberg_shift},
        {"max_shifts", s.solver.max_shifts}}},
      {"mpc_anchor_inset", s.mpc_anchor_inset},
      {"feedback", to_string(s.feedback)},
      {"extractor", to_string(s.extractor)},
      {"max_missed_frames", s.max_missed_frames},
      {"noise", {{"feature_px", s.noise.feature_px}, {"depth_m", s.noise.depth_m}, {"image_m", s.noise.image_m}}},
      {"ekf",
       {{"enabled", s.ekf_enabled},
        {"process_noise", matrix_json(s.ekf.process_noise)},
        {"measurement_noise", matrix_json(s.ekf.measurement_noise)},
        {"border_margin", s.ekf.border_margin},
        {"reset_nis", s.ekf_reset_nis}}},
      {"disturbances", disturbances},
  };
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  Reader r(j, "");
  r.integer("schema", s.schema);
  if (s.schema != kScenarioSchemaVersion) invalid("schema", "unsupported schema version " + std::to_string(s.schema));
  r.string("name", s.name);
  if (const json* v = r.find("seed")) {
    if (!v->is_number_unsigned()) invalid("seed", "expected a non-negative integer");
    s.seed = v->get<std::uint64_t>();
  }
  r.number("duration", s.duration);

  if (const json* v = r.find("camera")) {
    Reader c(*v, "camera");
    c.number("focal_length", s.camera.focal_length);
    c.number("pixel_pitch", s.camera.pixel_pitch);
    c.number("cu", s.camera.cu);
    c.number("cv", s.camera.cv);
    c.integer("width", s.camera.width);
    c.integer("height", s.camera.height);
    c.finish();
  }

  if (const json* v = r.find("world")) {
    Reader w(*v, "world");
    if (const json* c = w.find("contour")) s.world.contour = ContourPath(contour_from_json(*c, "world.contour"));
    if (const json* p = w.find("surface")) {
      Reader sp(*p, "world.surface");
      sp.number("z0", s.world.surface.z0);
      sp.number("gx", s.world.surface.gx);
      sp.number("gy", s.world.surface.gy);
      sp.finish();
    }
    w.number("ridge_height", s.world.ridge_height);
    w.number("ridge_sigma", s.world.ridge_sigma);
    w.finish();
  }

  if (const json* v = r.find("start")) {
    Reader st(*v, "start");
    st.number("arclength", s.start.arclength);
    st.number("lateral", s.start.lateral);
    st.number("yaw", s.start.yaw);
    st.number("pitch", s.start.pitch);
    st.number("depth", s.start.depth);
    st.finish();
  }

  s.controller = parse_enum(r, "controller", to_string(s.controller), controller_kind_from_string);

  if (const json* v = r.find("gains")) {
    Reader g(*v, "gains");
    ControllerGains& gn = s.gains;
    g.matrix<4>("servo_gain", gn.servo_gain);
    g.number("damping", gn.damping);
    g.number("k_z", gn.k_z);
    g.number("k_alpha", gn.k_alpha);
    g.matrix<4>("q", gn.q);
    g.matrix<6>("r", gn.r);
    g.integer("horizon_steps", gn.horizon_steps);
    g.number("dt", gn.dt);
    g.vector<10>("state_lower", gn.state_lower, -kInf);
    g.vector<10>("state_upper", gn.state_upper, kInf);
    g.vector<6>("input_lower", gn.input_lower, -kInf);
    g.vector<6>("input_upper", gn.input_upper, kInf);
    g.finish();
  }

  if (const json* v = r.find("reference")) {
    Reader rf(*v, "reference");
    Eigen::Vector4d xi = s.reference.xi_d.vector();
    rf.vector<4>("xi_d", xi);
    s.reference.xi_d = ContourFeatures::from_vector(xi);
    rf.number("v_x_max", s.reference.v_x_max);
    rf.matrix<4>("weight_w", s.reference.weight_w);
    rf.finish();
  }

  if (const json* v = r.find("solver")) {
    Reader so(*v, "solver");
    so.integer("max_sqp_iterations", s.solver.max_sqp_iterations);
    so.number("kkt_tolerance", s.solver.kkt_tolerance);
    so.number("levenberg_shift", s.solver.levenberg_shift);
    so.integer("max_shifts", s.solver.max_shifts);
    so.finish();
  }

  r.number("mpc_anchor_inset", s.mpc_anchor_inset);
  s.feedback = parse_enum(r, "feedback", to_string(s.feedback), feedback_mode_from_string);
  s.extractor = parse_enum(r, "extractor", to_string(s.extractor), extractor_from_string);
  r.integer("max_missed_frames", s.max_missed_frames);

  if (const json* v = r.find("noise")) {
    Reader n(*v, "noise");
    n.number("feature_px", s.noise.feature_px);
    n.number("depth_m", s.noise.depth_m);
    n.number("image_m", s.noise.image_m);
    n.finish();
  }

  if (const json* v = r.find("ekf")) {
    Reader e(*v, "ekf");
    e.boolean("enabled", s.ekf_enabled);
    e.matrix<10>("process_noise", s.ekf.process_noise);
    e.matrix<6>("measurement_noise", s.ekf.measurement_noise);
    e.number("border_margin", s.ekf.border_margin);
    e.number("reset_nis", s.ekf_reset_nis);
    e.finish();
  }

  if (const json* v = r.find("disturbances")) {
    if (!v->is_array()) invalid("disturbances", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string p = "disturbances[" + std::to_string(i) + "]";
      Reader d((*v)[i], p);
      Disturbance dist;
      d.number("time", dist.time);
      d.vector<6>("offset", dist.offset);
      d.finish();
      s.disturbances.push_back(dist);
    }
  }
  r.finish();
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ScenarioInvalid, path.string() + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << to_json(s).dump(2) << '\n';
}

std::uint64_t scenario_hash(const Scenario& s) { return fnv1a(to_json(s).dump()); }

std::uint64_t scenario_family_hash(const Scenario& s) {
  json j = to_json(s);
  for (const char* key : {"name", "seed", "controller", "gains", "reference", "solver", "mpc_anchor_inset", "ekf"}) {
    j.erase(key);
  }
  return fnv1a(j.dump());
}

std::vector<StartPose> s_shape_starts() {
  StartPose base;
  base.depth = 0.0195;
  std::vector<StartPose> out(5, base);
  out[1].lateral = 0.002;
  out[2].lateral = -0.002;
  out[3].yaw = 0.05;
  out[4].yaw = -0.05;
  return out;
}

std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> out;
  for (const char* family : {"straight", "s-shape", "s-shape-disturbed", "hexagon"}) {
    for (const char* ctl : {"coupled", "decoupled", "mpc"}) out.push_back(std::string(family) + "-" + ctl);
  }
  return out;
}

Scenario builtin_scenario(const std::string& name) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) throw Error(ErrorCode::ScenarioInvalid, "unknown scenario '" + name + "'");
  const std::string family = name.substr(0, dash);
  Scenario s;
  s.name = name;
  s.controller = controller_kind_from_string(name.substr(dash + 1));
  ContourPath::Params p;
  if (family == "straight") {
    p.kind = ContourKind::Line;
    p.origin = {-0.05, 0.0};
    p.length = 0.4;
    s.start = {0.05, 0.0015, 0.15, 0.0, 0.0195};
    s.duration = 30.0;
  } else if (family == "s-shape" || family == "s-shape-disturbed") {
    p.kind = ContourKind::SShape;
    p.length = 0.24;
    p.amplitude = 0.02;
    p.wavelength = 0.12;
    s.start = s_shape_starts().front();
    s.noise.feature_px = 1.0;
    s.duration = 70.0;
    if (family == "s-shape-disturbed") {
      Disturbance d;
      d.time = 15.0;
      d.offset(1) = 0.005;
      s.disturbances.push_back(d);
    }
  } else if (family == "hexagon") {
    p.kind = ContourKind::Hexagon;
    p.circumradius = 0.04;
    s.start = {0.0, 0.0, 0.0, 0.0, 0.0195};
    s.reference.v_x_max = 0.004;
    s.duration = 70.0;
  } else {
    throw Error(ErrorCode::ScenarioInvalid, "unknown scenario '" + name + "'");
  }
  s.world.contour = ContourPath(p);
  s.validate();
  return s;
}

}  // namespace vbt
