#include "qslam/io.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace qslam {

namespace fs = std::filesystem;

std::string format_fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", x);
  return buf;
}

std::string format_sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9e", x);
  return buf;
}

namespace {

std::string location(const fs::path& path, size_t line) {
  return path.string() + ":" + std::to_string(line);
}

// Splits a data line into whitespace-separated fields; empty and '#' lines
// yield no fields.
std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (ss >> f) {
    if (f.front() == '#') break;
    fields.push_back(f);
  }
  return fields;
}

double parse_double(const std::string& s, const fs::path& path, size_t line) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "' at " + location(path, line));
  }
  if (pos != s.size()) {
    throw ParseError("bad number '" + s + "' at " + location(path, line));
  }
  return v;
}

int parse_int(const std::string& s, const fs::path& path, size_t line) {
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + s + "' at " + location(path, line));
  }
  if (pos != s.size()) {
    throw ParseError("bad integer '" + s + "' at " + location(path, line));
  }
  return v;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::pair<double, Pose>> load_trajectory(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<double, Pose>> out;
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 8) {
      throw ParseError("expected 8 fields, got " + std::to_string(f.size()) +
                       " at " + location(path, ln));
    }
    const double ts = parse_double(f[0], path, ln);
    Pose p;
    p.t = {parse_double(f[1], path, ln), parse_double(f[2], path, ln),
           parse_double(f[3], path, ln)};
    const double qx = parse_double(f[4], path, ln);
    const double qy = parse_double(f[5], path, ln);
    const double qz = parse_double(f[6], path, ln);
    const double qw = parse_double(f[7], path, ln);
    const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
    if (std::abs(norm - 1.0) > 1e-3) {
      throw NonUnitQuaternion("quaternion norm " + std::to_string(norm) +
                              " at " + location(path, ln));
    }
    p.q = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    out.emplace_back(ts, p);
  }
  return out;
}

void save_trajectory(const fs::path& path,
                     const std::vector<std::pair<double, Pose>>& trajectory) {
  auto out = open_output(path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& [ts, p] : trajectory) {
    out << format_fixed(ts) << ' ' << format_fixed(p.t.x()) << ' '
        << format_fixed(p.t.y()) << ' ' << format_fixed(p.t.z()) << ' '
        << format_fixed(p.q.x()) << ' ' << format_fixed(p.q.y()) << ' '
        << format_fixed(p.q.z()) << ' ' << format_fixed(p.q.w()) << '\n';
  }
}

std::vector<Detection> load_detections(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Detection> out;
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 8) {
      throw ParseError("expected 8 fields, got " + std::to_string(f.size()) +
                       " at " + location(path, ln));
    }
    Detection d;
    d.frame_id = parse_int(f[0], path, ln);
    d.object_id = parse_int(f[1], path, ln);
    d.label = f[2];
    d.bbox = {parse_double(f[3], path, ln), parse_double(f[4], path, ln),
              parse_double(f[5], path, ln), parse_double(f[6], path, ln)};
    d.p_det = parse_double(f[7], path, ln);
    if (!d.bbox.valid()) {
      throw InvalidBBox("degenerate bbox at " + location(path, ln));
    }
    if (d.p_det < 0 || d.p_det > 1) {
      throw ParseError("p_det outside [0,1] at " + location(path, ln));
    }
    out.push_back(std::move(d));
  }
  return out;
}

void save_detections(const fs::path& path,
                     const std::vector<Detection>& detections) {
  auto out = open_output(path);
  out << "# frame_id object_id label x_min y_min x_max y_max p_det\n";
  for (const auto& d : detections) {
    out << d.frame_id << ' ' << d.object_id << ' ' << d.label << ' '
        << format_fixed(d.bbox.x_min) << ' ' << format_fixed(d.bbox.y_min)
        << ' ' << format_fixed(d.bbox.x_max) << ' '
        << format_fixed(d.bbox.y_max) << ' ' << format_fixed(d.p_det) << '\n';
  }
}

namespace {

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) continue;
    tok.push_back(char(c));
    while ((c = in.peek()) != EOF && !std::isspace(c)) {
      tok.push_back(char(in.get()));
    }
    return tok;
  }
  throw TruncatedFile("unexpected end of header in " + path.string());
}

}  // namespace

DepthImage load_depth(const fs::path& path, double scale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());

  const std::string magic = pgm_token(in, path);
  if (magic != "P5" && magic != "P2") {
    throw UnsupportedFormat("not a PGM depth file (" + magic + ") in " +
                            path.string());
  }
  const int width = std::stoi(pgm_token(in, path));
  const int height = std::stoi(pgm_token(in, path));
  const long maxval = std::stol(pgm_token(in, path));
  if (width <= 0 || height <= 0) {
    throw ParseError("bad dimensions in " + path.string());
  }
  if (maxval <= 0 || maxval > 65535) {
    throw UnsupportedFormat("maxval " + std::to_string(maxval) + " in " +
                            path.string());
  }

  DepthImage depth;
  depth.width = width;
  depth.height = height;
  depth.depth_scale = scale;
  depth.samples.resize(size_t(width) * height);

  if (magic == "P2") {
    for (auto& s : depth.samples) {
      long v;
      if (!(in >> v)) throw TruncatedFile("missing samples in " + path.string());
      if (v < 0 || v > maxval) {
        throw ParseError("sample out of range in " + path.string());
      }
      s = uint16_t(v);
    }
  } else {
    // P5: one whitespace byte after maxval, then big-endian samples.
    in.get();
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(depth.samples.size() * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (size_t(in.gcount()) != raw.size()) {
      throw TruncatedFile("binary samples truncated in " + path.string());
    }
    for (size_t i = 0; i < depth.samples.size(); ++i) {
      depth.samples[i] = bytes == 2
                             ? uint16_t(raw[2 * i] << 8 | raw[2 * i + 1])
                             : uint16_t(raw[i]);
    }
  }
  return depth;
}

void save_depth(const fs::path& path, const DepthImage& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  std::vector<unsigned char> raw(depth.samples.size() * 2);
  for (size_t i = 0; i < depth.samples.size(); ++i) {
    raw[2 * i] = (unsigned char)(depth.samples[i] >> 8);
    raw[2 * i + 1] = (unsigned char)(depth.samples[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            std::streamsize(raw.size()));
}

std::vector<SceneObject> load_objects(const fs::path& path) {
  auto in = open_input(path);
  std::vector<SceneObject> out;
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 11) {
      throw ParseError("expected 11 fields, got " + std::to_string(f.size()) +
                       " at " + location(path, ln));
    }
    SceneObject o;
    o.object_id = parse_int(f[0], path, ln);
    o.label = f[1];
    o.state.t = {parse_double(f[2], path, ln), parse_double(f[3], path, ln),
                 parse_double(f[4], path, ln)};
    o.state.rpy = {parse_double(f[5], path, ln), parse_double(f[6], path, ln),
                   parse_double(f[7], path, ln)};
    o.state.s = {parse_double(f[8], path, ln), parse_double(f[9], path, ln),
                 parse_double(f[10], path, ln)};
    if (!(o.state.s.minCoeff() > 0)) {
      throw NonPositiveAxis("non-positive semi-axis at " + location(path, ln));
    }
    out.push_back(std::move(o));
  }
  return out;
}

void save_objects(const fs::path& path,
                  const std::vector<SceneObject>& objects) {
  auto out = open_output(path);
  out << "# object_id label x y z roll pitch yaw s1 s2 s3\n";
  for (const auto& o : objects) {
    out << o.object_id << ' ' << o.label;
    for (int k = 0; k < 3; ++k) out << ' ' << format_fixed(o.state.t[k]);
    for (int k = 0; k < 3; ++k) out << ' ' << format_fixed(o.state.rpy[k]);
    for (int k = 0; k < 3; ++k) out << ' ' << format_fixed(o.state.s[k]);
    out << '\n';
  }
}

std::vector<Observation> load_observations(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Observation> out;
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 17) {
      throw ParseError("expected 17 fields, got " + std::to_string(f.size()) +
                       " at " + location(path, ln));
    }
    Observation o;
    o.frame_id = parse_int(f[0], path, ln);
    o.object_id = parse_int(f[1], path, ln);
    o.bbox = {parse_double(f[2], path, ln), parse_double(f[3], path, ln),
              parse_double(f[4], path, ln), parse_double(f[5], path, ln)};
    if (!o.bbox.valid()) {
      throw InvalidBBox("degenerate bbox at " + location(path, ln));
    }
    o.p_det = parse_double(f[6], path, ln);
    o.ellipsoid_c.t = {parse_double(f[7], path, ln),
                       parse_double(f[8], path, ln),
                       parse_double(f[9], path, ln)};
    o.ellipsoid_c.rpy = {parse_double(f[10], path, ln),
                         parse_double(f[11], path, ln),
                         parse_double(f[12], path, ln)};
    o.ellipsoid_c.s = {parse_double(f[13], path, ln),
                       parse_double(f[14], path, ln),
                       parse_double(f[15], path, ln)};
    if (!(o.ellipsoid_c.s.minCoeff() > 0)) {
      throw NonPositiveAxis("non-positive semi-axis at " + location(path, ln));
    }
    o.p_e = parse_double(f[16], path, ln);
    out.push_back(std::move(o));
  }
  return out;
}

void save_observations(const fs::path& path,
                       const std::vector<Observation>& observations) {
  auto out = open_output(path);
  out << "# frame_id object_id x_min y_min x_max y_max p_det"
         " x y z roll pitch yaw s1 s2 s3 p_e\n";
  for (const auto& o : observations) {
    out << o.frame_id << ' ' << o.object_id << ' '
        << format_fixed(o.bbox.x_min) << ' ' << format_fixed(o.bbox.y_min)
        << ' ' << format_fixed(o.bbox.x_max) << ' '
        << format_fixed(o.bbox.y_max) << ' ' << format_sci(o.p_det);
    for (int k = 0; k < 3; ++k) out << ' ' << format_fixed(o.ellipsoid_c.t[k]);
    for (int k = 0; k < 3; ++k)
      out << ' ' << format_fixed(o.ellipsoid_c.rpy[k]);
    for (int k = 0; k < 3; ++k) out << ' ' << format_fixed(o.ellipsoid_c.s[k]);
    out << ' ' << format_sci(o.p_e) << '\n';
  }
}

CloudFile load_cloud(const fs::path& path) {
  auto in = open_input(path);
  CloudFile out;
  bool have_plane = false;
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (!have_plane) {
      if (f.size() != 5 || f[0] != "plane") {
        throw ParseError("expected 'plane nx ny nz d' at " +
                         location(path, ln));
      }
      out.support.n = {parse_double(f[1], path, ln),
                       parse_double(f[2], path, ln),
                       parse_double(f[3], path, ln)};
      out.support.d = parse_double(f[4], path, ln);
      have_plane = true;
      continue;
    }
    if (f.size() != 3) {
      throw ParseError("expected 3 fields, got " + std::to_string(f.size()) +
                       " at " + location(path, ln));
    }
    out.cloud.emplace_back(parse_double(f[0], path, ln),
                           parse_double(f[1], path, ln),
                           parse_double(f[2], path, ln));
  }
  if (!have_plane) throw ParseError("missing plane header in " + path.string());
  return out;
}

void save_cloud(const fs::path& path, const Plane& support,
                const PointCloud& cloud) {
  auto out = open_output(path);
  out << "plane " << format_fixed(support.n.x()) << ' '
      << format_fixed(support.n.y()) << ' ' << format_fixed(support.n.z())
      << ' ' << format_fixed(support.d) << '\n';
  for (const auto& p : cloud) {
    out << format_fixed(p.x()) << ' ' << format_fixed(p.y()) << ' '
        << format_fixed(p.z()) << '\n';
  }
}

Camera load_camera(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 6) {
      throw ParseError("expected 6 fields at " + location(path, ln));
    }
    Camera cam;
    cam.fx = parse_double(f[0], path, ln);
    cam.fy = parse_double(f[1], path, ln);
    cam.cx = parse_double(f[2], path, ln);
    cam.cy = parse_double(f[3], path, ln);
    cam.width = parse_int(f[4], path, ln);
    cam.height = parse_int(f[5], path, ln);
    if (cam.fx <= 0 || cam.fy <= 0 || cam.width <= 0 || cam.height <= 0) {
      throw ParseError("invalid intrinsics at " + location(path, ln));
    }
    return cam;
  }
  throw ParseError("empty camera file " + path.string());
}

void save_camera(const fs::path& path, const Camera& cam) {
  auto out = open_output(path);
  out << "# fx fy cx cy width height\n";
  out << format_fixed(cam.fx) << ' ' << format_fixed(cam.fy) << ' '
      << format_fixed(cam.cx) << ' ' << format_fixed(cam.cy) << ' '
      << cam.width << ' ' << cam.height << '\n';
}

namespace {

double to_double(const std::string& v, const std::string& key) {
  size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key);
  }
  if (pos != v.size()) throw ParseError("bad value '" + v + "' for " + key);
  return d;
}

int to_int(const std::string& v, const std::string& key) {
  size_t pos = 0;
  int d = 0;
  try {
    d = std::stoi(v, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key);
  }
  if (pos != v.size()) throw ParseError("bad value '" + v + "' for " + key);
  return d;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  const auto d = [&] { return to_double(value, key); };
  const auto i = [&] { return to_int(value, key); };

  if (key == "cam.fx") camera.fx = d();
  else if (key == "cam.fy") camera.fy = d();
  else if (key == "cam.cx") camera.cx = d();
  else if (key == "cam.cy") camera.cy = d();
  else if (key == "cam.width") camera.width = i();
  else if (key == "cam.height") camera.height = i();
  else if (key == "seg.eps0_deg") seg.eps0_deg = d();
  else if (key == "seg.eps1") seg.eps1 = i();
  else if (key == "seg.eps2") seg.eps2 = d();
  else if (key == "seg.eps3") seg.eps3 = i();
  else if (key == "seg.ransac_iters") seg.ransac_iters = i();
  else if (key == "seg.ransac_inlier_dist") seg.ransac_inlier_dist = d();
  else if (key == "seg.cluster_tolerance") seg.cluster_tolerance = d();
  else if (key == "seg.gravity_x") seg.gravity.x() = d();
  else if (key == "seg.gravity_y") seg.gravity.y() = d();
  else if (key == "seg.gravity_z") seg.gravity.z() = d();
  else if (key == "sym.sigma") sym.sigma_sym = d();
  else if (key == "sym.angle_search_deg") sym.angle_search_deg = d();
  else if (key == "sym.offset_search") sym.offset_search = d();
  else if (key == "sym.grid_steps") sym.grid_steps = i();
  else if (key == "fit.max_iterations") fit.max_iterations = i();
  else if (key == "fit.lambda_init") fit.lm_initial_lambda = d();
  else if (key == "fit.convergence_tol") fit.convergence_tol = d();
  else if (key == "fit.min_points") fit.min_points = i();
  else if (key == "graph.epsilon_z") graph.epsilon_z = d();
  else if (key == "graph.huber_delta_2d") graph.huber_delta_2d = d();
  else if (key == "graph.huber_delta_3d") graph.huber_delta_3d = d();
  else if (key == "graph.huber_delta_odom") graph.huber_delta_odom = d();
  else if (key == "graph.sigma_2d") graph.sigma_2d = d();
  else if (key == "graph.sigma_3d_t") graph.sigma_3d.head<3>().setConstant(d());
  else if (key == "graph.sigma_3d_r") graph.sigma_3d.segment<3>(3).setConstant(d());
  else if (key == "graph.sigma_3d_s") graph.sigma_3d.tail<3>().setConstant(d());
  else if (key == "graph.sigma_odom_t") graph.sigma_odom.head<3>().setConstant(d());
  else if (key == "graph.sigma_odom_r") graph.sigma_odom.tail<3>().setConstant(d());
  else if (key == "graph.max_iterations") graph.max_iterations = i();
  else if (key == "graph.mode") {
    try {
      graph.mode = mode_from_string(value);
    } catch (const std::exception&) {
      throw ParseError("bad value '" + value + "' for " + key);
    }
  }
  else if (key == "noise.bbox_sigma") noise.bbox_sigma = d();
  else if (key == "noise.depth_sigma") noise.depth_sigma = d();
  else if (key == "noise.p_det_min") noise.p_det_min = d();
  else if (key == "noise.p_det_max") noise.p_det_max = d();
  else if (key == "noise.samples_per_object") noise.samples_per_object = i();
  else if (key == "traj.mode") {
    if (value == "orbit") traj.mode = TrajectoryMode::Orbit;
    else if (value == "forward") traj.mode = TrajectoryMode::Forward;
    else throw ParseError("bad value '" + value + "' for " + key);
  } else if (key == "traj.frames") traj.n_frames = i();
  else if (key == "traj.orbit_radius") traj.orbit_radius = d();
  else if (key == "traj.forward_length") traj.forward_length = d();
  else if (key == "traj.camera_height") traj.camera_height = d();
  else if (key == "traj.odom_sigma_t") traj.odom_sigma_t = d();
  else if (key == "traj.odom_sigma_r") traj.odom_sigma_r = d();
  else if (key == "eval.min_observations") eval.min_observations = i();
  else if (key == "eval.min_p_det") eval.min_p_det = d();
  else if (key == "sim.emit") {
    if (value != "clouds" && value != "depth") {
      throw ParseError("bad value '" + value + "' for " + key);
    }
    sim_emit = value;
  } else if (key.rfind("symmetry.label.", 0) == 0) {
    const std::string label = key.substr(std::strlen("symmetry.label."));
    if (label.empty()) throw ParseError("empty symmetry label key");
    if (value == "plane") symmetry_table.set(label, SymmetryKind::PlaneReflection);
    else if (value == "dual") symmetry_table.set(label, SymmetryKind::DualPlaneReflection);
    else throw ParseError("bad value '" + value + "' for " + key);
  } else {
    throw ParseError("unknown config key '" + key + "'");
  }
}

void Config::load_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  for (size_t ln = 1; std::getline(in, line); ++ln) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ParseError("expected key=value at " + location(path, ln));
      }
      continue;
    }
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key at " + location(path, ln));
    try {
      set(key, value);
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " at " + location(path, ln));
    }
  }
}

void Config::echo(std::ostream& out) const {
  std::map<std::string, std::string> kv;
  const auto fd = [](double x) { return format_fixed(x); };
  kv["cam.fx"] = fd(camera.fx);
  kv["cam.fy"] = fd(camera.fy);
  kv["cam.cx"] = fd(camera.cx);
  kv["cam.cy"] = fd(camera.cy);
  kv["cam.width"] = std::to_string(camera.width);
  kv["cam.height"] = std::to_string(camera.height);
  kv["seg.eps0_deg"] = fd(seg.eps0_deg);
  kv["seg.eps1"] = std::to_string(seg.eps1);
  kv["seg.eps2"] = fd(seg.eps2);
  kv["seg.eps3"] = std::to_string(seg.eps3);
  kv["seg.ransac_iters"] = std::to_string(seg.ransac_iters);
  kv["seg.ransac_inlier_dist"] = fd(seg.ransac_inlier_dist);
  kv["seg.cluster_tolerance"] = fd(seg.cluster_tolerance);
  kv["seg.gravity_x"] = fd(seg.gravity.x());
  kv["seg.gravity_y"] = fd(seg.gravity.y());
  kv["seg.gravity_z"] = fd(seg.gravity.z());
  kv["sym.sigma"] = fd(sym.sigma_sym);
  kv["sym.angle_search_deg"] = fd(sym.angle_search_deg);
  kv["sym.offset_search"] = fd(sym.offset_search);
  kv["sym.grid_steps"] = std::to_string(sym.grid_steps);
  kv["fit.max_iterations"] = std::to_string(fit.max_iterations);
  kv["fit.lambda_init"] = format_sci(fit.lm_initial_lambda);
  kv["fit.convergence_tol"] = format_sci(fit.convergence_tol);
  kv["fit.min_points"] = std::to_string(fit.min_points);
  kv["graph.epsilon_z"] = fd(graph.epsilon_z);
  kv["graph.huber_delta_2d"] = fd(graph.huber_delta_2d);
  kv["graph.huber_delta_3d"] = fd(graph.huber_delta_3d);
  kv["graph.huber_delta_odom"] = fd(graph.huber_delta_odom);
  kv["graph.sigma_2d"] = fd(graph.sigma_2d);
  kv["graph.sigma_3d_t"] = fd(graph.sigma_3d[0]);
  kv["graph.sigma_3d_r"] = fd(graph.sigma_3d[3]);
  kv["graph.sigma_3d_s"] = fd(graph.sigma_3d[6]);
  kv["graph.sigma_odom_t"] = fd(graph.sigma_odom[0]);
  kv["graph.sigma_odom_r"] = fd(graph.sigma_odom[3]);
  kv["graph.max_iterations"] = std::to_string(graph.max_iterations);
  kv["graph.mode"] = mode_to_string(graph.mode);
  kv["noise.bbox_sigma"] = fd(noise.bbox_sigma);
  kv["noise.depth_sigma"] = fd(noise.depth_sigma);
  kv["noise.p_det_min"] = fd(noise.p_det_min);
  kv["noise.p_det_max"] = fd(noise.p_det_max);
  kv["noise.samples_per_object"] = std::to_string(noise.samples_per_object);
  kv["traj.mode"] = traj.mode == TrajectoryMode::Orbit ? "orbit" : "forward";
  kv["traj.frames"] = std::to_string(traj.n_frames);
  kv["traj.orbit_radius"] = fd(traj.orbit_radius);
  kv["traj.forward_length"] = fd(traj.forward_length);
  kv["traj.camera_height"] = fd(traj.camera_height);
  kv["traj.odom_sigma_t"] = fd(traj.odom_sigma_t);
  kv["traj.odom_sigma_r"] = fd(traj.odom_sigma_r);
  kv["eval.min_observations"] = std::to_string(eval.min_observations);
  kv["eval.min_p_det"] = fd(eval.min_p_det);
  kv["sim.emit"] = sim_emit;
  for (const auto& [label, kind] : symmetry_table.entries()) {
    kv["symmetry.label." + label] =
        kind == SymmetryKind::PlaneReflection ? "plane" : "dual";
  }
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

std::vector<Pose> Dataset::odometry_poses() const {
  std::vector<Pose> poses;
  poses.reserve(odometry.size());
  for (const auto& [ts, p] : odometry) poses.push_back(p);
  return poses;
}

std::filesystem::path Dataset::cloud_path(int frame_id, int object_id) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "cloud_%06d_%03d.txt", frame_id, object_id);
  return root / "clouds" / buf;
}

std::filesystem::path Dataset::depth_path(int frame_id) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "depth_%06d.pgm", frame_id);
  return root / "depth" / buf;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.root = dir;
  d.camera = load_camera(dir / "camera.txt");
  d.odometry = load_trajectory(dir / "odometry.txt");
  if (fs::exists(dir / "groundtruth.txt")) {
    d.groundtruth = load_trajectory(dir / "groundtruth.txt");
  }
  d.detections = load_detections(dir / "detections.txt");
  if (fs::exists(dir / "objects_gt.txt")) {
    d.gt_objects = load_objects(dir / "objects_gt.txt");
  }
  d.has_clouds = fs::exists(dir / "clouds");
  d.has_depth = fs::exists(dir / "depth");

  const int n_frames = int(d.odometry.size());
  std::set<std::pair<int, int>> seen;
  for (const auto& det : d.detections) {
    if (det.frame_id < 0 || det.frame_id >= n_frames) {
      throw ParseError("detection frame " + std::to_string(det.frame_id) +
                       " not in trajectory (" + std::to_string(n_frames) +
                       " frames)");
    }
    if (!seen.emplace(det.frame_id, det.object_id).second) {
      throw ParseError("object " + std::to_string(det.object_id) +
                       " appears twice in frame " +
                       std::to_string(det.frame_id));
    }
  }
  return d;
}

}  // namespace qslam
