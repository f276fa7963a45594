#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "maflow/diagnostics.hpp"
#include "maflow/elliptic.hpp"

namespace maflow {

inline constexpr const char* kVersion = "0.2.0";

// ---------------------------------------------------------------------------
// Formatting helpers (all artifact numbers round-trip through %.17g; exact
// state restoration uses C99 hex floats).

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw IoError("cannot parse number: '" + s + "'");
  return v;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// MAFLOW1 field dumps: text header `MAFLOW1 <n> <shape...> <count>`, then
// `count` records of little-endian 8-byte floats in row-major point order.

namespace detail {

inline std::uint64_t to_le_bits(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap64(bits);
  return bits;
}

inline double from_le_bits(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big)
    bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

template <class T>
struct FieldComponents;

template <>
struct FieldComponents<double> {
  static constexpr int count = 1;
  static double get(const double& v, int) { return v; }
  static void set(double& v, int, double x) { v = x; }
};

template <>
struct FieldComponents<cplx> {
  static constexpr int count = 2;
  static double get(const cplx& v, int c) { return c == 0 ? v.real() : v.imag(); }
  static void set(cplx& v, int c, double x) {
    if (c == 0)
      v.real(x);
    else
      v.imag(x);
  }
};

template <int R, int C>
struct FieldComponents<Eigen::Matrix<double, R, C>> {
  static constexpr int count = R * C;
  static double get(const Eigen::Matrix<double, R, C>& v, int c) {
    return v(c / C, c % C);
  }
  static void set(Eigen::Matrix<double, R, C>& v, int c, double x) {
    v(c / C, c % C) = x;
  }
};

template <int R, int C>
struct FieldComponents<Eigen::Matrix<cplx, R, C>> {
  static constexpr int count = 2 * R * C;
  static double get(const Eigen::Matrix<cplx, R, C>& v, int c) {
    const cplx& e = v((c / 2) / C, (c / 2) % C);
    return c % 2 == 0 ? e.real() : e.imag();
  }
  static void set(Eigen::Matrix<cplx, R, C>& v, int c, double x) {
    cplx& e = v((c / 2) / C, (c / 2) % C);
    if (c % 2 == 0)
      e.real(x);
    else
      e.imag(x);
  }
};

}  // namespace detail

template <class T>
void write_field(const std::filesystem::path& path, const Field<T>& f) {
  using FC = detail::FieldComponents<T>;
  const GridGeometry& g = f.geom();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "MAFLOW1 " << g.n();
  for (int a = 0; a < g.real_dim(); ++a) out << " " << g.shape(a);
  out << " " << FC::count << "\n";
  std::vector<std::uint64_t> buf(g.npoints());
  for (int c = 0; c < FC::count; ++c) {
    for (std::size_t p = 0; p < g.npoints(); ++p)
      buf[p] = detail::to_le_bits(FC::get(f[p], c));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::uint64_t)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline GridGeometry read_field_header(std::istream& in, int& count,
                                      const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(what + ": missing header");
  std::istringstream hs(line);
  std::string magic;
  int n = 0;
  hs >> magic >> n;
  if (magic != "MAFLOW1" || !hs) throw IoError(what + ": bad magic '" + magic + "'");
  if (n != 1 && n != 2) throw IoError(what + ": bad dimension " + std::to_string(n));
  std::array<int, 4> shape{};
  for (int a = 0; a < 2 * n; ++a)
    if (!(hs >> shape[a])) throw IoError(what + ": truncated shape");
  if (!(hs >> count)) throw IoError(what + ": missing component count");
  return GridGeometry(n, shape);
}

template <class T>
Field<T> read_field(const std::filesystem::path& path) {
  using FC = detail::FieldComponents<T>;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  int count = 0;
  GridGeometry g = read_field_header(in, count, path.string());
  if (count != FC::count)
    throw IoError(path.string() + ": component count " + std::to_string(count) +
                  " does not match requested field kind (" +
                  std::to_string(FC::count) + ")");
  Field<T> f(g);
  std::vector<std::uint64_t> buf(g.npoints());
  for (int c = 0; c < count; ++c) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::uint64_t)));
    if (!in) throw IoError(path.string() + ": truncated payload");
    for (std::size_t p = 0; p < g.npoints(); ++p)
      FC::set(f[p], c, detail::from_le_bits(buf[p]));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Text manifests: ordered key = value lines. Repeated keys are allowed.

struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) {
    entries.emplace_back(key, value);
  }
  void add(const std::string& key, double v) { add(key, fmt_g17(v)); }

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
  const std::string& at(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw IoError("manifest: missing key '" + key + "'");
    return *v;
  }
};

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& [k, v] : m.entries) out << k << " = " << v << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(path.string() + ": bad line '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    m.add(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return m;
}

// ---------------------------------------------------------------------------
// CSV reports

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out_(path) {
    if (!out_) throw IoError("cannot open for writing: " + path.string());
    out_ << header << "\n";
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ",";
      out_ << fmt_g17(values[i]);
    }
    out_ << "\n";
  }

  void raw_row(const std::string& line) { out_ << line << "\n"; }

 private:
  std::ofstream out_;
};

inline constexpr const char* kMonitorCsvHeader =
    "t,sup_phit,sup_env,inf_env,osc_phi,grad_sq_sup,hess_sup,lap_c_min,"
    "gtilde_min,theta";

inline void write_monitor_csv(const std::filesystem::path& path,
                              const MonitorReport& report) {
  CsvWriter csv(path, kMonitorCsvHeader);
  for (const MonitorRow& r : report.rows)
    csv.row({r.t, r.sup_phit, r.sup_env, r.inf_env, r.osc_phi, r.grad_sq_sup,
             r.hess_sup, r.lap_c_min, r.gtilde_min, r.theta});
}

inline MonitorReport read_monitor_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMonitorCsvHeader)
    throw IoError(path.string() + ": unexpected monitor CSV header");
  MonitorReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) v.push_back(parse_double(cell));
    if (v.size() != 10) throw IoError(path.string() + ": bad row '" + line + "'");
    MonitorRow r;
    r.t = v[0];
    r.sup_phit = v[1];
    r.sup_env = v[2];
    r.inf_env = v[3];
    r.osc_phi = v[4];
    r.grad_sq_sup = v[5];
    r.hess_sup = v[6];
    r.lap_c_min = v[7];
    r.gtilde_min = v[8];
    r.theta = v[9];
    report.rows.push_back(r);
  }
  return report;
}

inline void write_decay_csv(const std::filesystem::path& path, const DecayFit& fit) {
  CsvWriter csv(path, "C,eta,r_squared,t_start,t_end,rows_used");
  csv.row({fit.C, fit.eta, fit.r_squared, fit.t_start, fit.t_end,
           static_cast<double>(fit.rows_used)});
}

inline void write_newton_csv(const std::filesystem::path& path,
                             const std::vector<NewtonIterationRow>& log) {
  CsvWriter csv(path, "iter,residual_sup,step_length,b");
  for (const auto& r : log)
    csv.row({static_cast<double>(r.iter), r.residual_sup, r.step_length, r.b});
}

// ---------------------------------------------------------------------------
// Model serialization: one field dump per tensor plus a text manifest with
// the spec parameters.

template <int N>
void write_model(const std::filesystem::path& dir, const Model<N>& m) {
  std::filesystem::create_directories(dir);
  write_field(dir / "J.field", m.J);
  write_field(dir / "G.field", m.G);
  write_field(dir / "Ginv.field", m.Ginv);
  write_field(dir / "vol.field", m.vol);
  write_field(dir / "frame.field", m.frame);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const std::string ij = std::to_string(i) + "_" + std::to_string(j);
      write_field(dir / ("brackets01_" + ij + ".field"), m.brackets01[i][j]);
      write_field(dir / ("brackets10_" + ij + ".field"), m.brackets10[i][j]);
    }
  Manifest man;
  man.add("format", "MAFLOW-MODEL1");
  man.add("version", kVersion);
  man.add("kind", m.spec.kind == ModelKind::FlatIntegrable ? "flat_integrable"
                                                           : "rotated_J");
  man.add("n", std::to_string(N));
  std::string shape;
  for (int a = 0; a < 2 * N; ++a)
    shape += (a ? " " : "") + std::to_string(m.spec.shape[a]);
  man.add("shape", shape);
  man.add("amplitude", m.spec.amplitude);
  man.add("wave", std::to_string(m.spec.wave));
  write_manifest(dir / "manifest.txt", man);
}

// Reconstructs a model from dumped tensors (no re-derivation: the stored
// fields are what gets verified).
template <int N>
Model<N> read_model(const std::filesystem::path& dir) {
  const Manifest man = read_manifest(dir / "manifest.txt");
  if (man.at("format") != "MAFLOW-MODEL1")
    throw IoError(dir.string() + ": not a model directory");
  if (std::stoi(man.at("n")) != N)
    throw IoError(dir.string() + ": model dimension mismatch");
  Model<N> m;
  m.spec.kind = man.at("kind") == "rotated_J" ? ModelKind::RotatedJ
                                              : ModelKind::FlatIntegrable;
  m.spec.n = N;
  m.spec.amplitude = parse_double(man.at("amplitude"));
  m.spec.wave = std::stoi(man.at("wave"));
  {
    std::istringstream ss(man.at("shape"));
    for (int a = 0; a < 2 * N; ++a) ss >> m.spec.shape[a];
  }
  m.J = read_field<typename Model<N>::RealMat>(dir / "J.field");
  m.geom = m.J.geom();
  m.G = read_field<typename Model<N>::RealMat>(dir / "G.field");
  m.Ginv = read_field<typename Model<N>::RealMat>(dir / "Ginv.field");
  m.vol = read_field<double>(dir / "vol.field");
  m.frame = read_field<typename Model<N>::FrameMat>(dir / "frame.field");
  double bracket_sup = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const std::string ij = std::to_string(i) + "_" + std::to_string(j);
      m.brackets01[i][j] = read_field<typename Model<N>::CoefVec>(
          dir / ("brackets01_" + ij + ".field"));
      m.brackets10[i][j] = read_field<typename Model<N>::CoefVec>(
          dir / ("brackets10_" + ij + ".field"));
      for (std::size_t p = 0; p < m.geom.npoints(); ++p)
        bracket_sup = std::max(bracket_sup,
                               m.brackets01[i][j][p].cwiseAbs().maxCoeff());
    }
  m.has_brackets = bracket_sup > 1e-13;
  double cell = 1.0;
  for (int a = 0; a < 2 * N; ++a) cell *= m.geom.spacing(a);
  m.quad.weights = ScalarField(m.geom);
  for (std::size_t p = 0; p < m.geom.npoints(); ++p)
    m.quad.weights[p] = m.vol[p] * cell;
  m.quad.total = parallel_sum(m.geom.npoints(),
                              [&](std::size_t p) { return m.quad.weights[p]; });
  return m;
}

// ---------------------------------------------------------------------------
// Flow snapshots: a field dump plus a manifest carrying the exact stepper
// state (hex floats), so a resumed run continues bit-compatibly.

template <int N>
void write_snapshot(const std::filesystem::path& dir, const FlowState<N>& s,
                    const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  const std::string stem = "snap_" + std::to_string(s.step);
  write_field(dir / (stem + ".field"), s.phi);
  Manifest m;
  m.add("format", "MAFLOW-SNAP1");
  m.add("version", kVersion);
  m.add("config_hash", config_hash);
  m.add("step", std::to_string(s.step));
  m.add("t", fmt_g17(s.t));
  m.add("t_hex", fmt_hex(s.t));
  m.add("dt", fmt_g17(s.dt));
  m.add("dt_hex", fmt_hex(s.dt));
  write_manifest(dir / (stem + ".manifest"), m);
}

template <int N>
FlowState<N> read_snapshot(const std::filesystem::path& manifest_path,
                           const ScalarField& F, const Model<N>& model) {
  const Manifest m = read_manifest(manifest_path);
  if (m.at("format") != "MAFLOW-SNAP1")
    throw IoError(manifest_path.string() + ": not a snapshot manifest");
  std::filesystem::path field_path = manifest_path;
  field_path.replace_extension(".field");
  FlowState<N> s;
  s.phi = read_field<double>(field_path);
  s.t = parse_double(m.at("t_hex"));
  s.dt = parse_double(m.at("dt_hex"));
  s.step = std::stol(m.at("step"));
  auto e = detail::rhs_eval(s.phi, F, model);
  s.phi_t = std::move(e.value);
  s.gtilde_min = e.gtilde_min;
  s.sup_inv_trace = e.sup_inv_trace;
  return s;
}

}  // namespace maflow
