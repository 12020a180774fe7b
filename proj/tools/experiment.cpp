#include "experiment.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace conjlab::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// config parsing

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + " must be a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
  return v.get<int>();
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + " must be a string");
  return v.get<std::string>();
}

Vector get_vector(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a non-empty array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = get_number(v[i], where);
  return out;
}

Matrix get_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a non-empty array of rows");
  const std::size_t rows = v.size();
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0) throw ConfigError(where + " rows must be non-empty arrays");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!v[i].is_array() || v[i].size() != cols) throw ConfigError(where + " is not rectangular");
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = get_number(v[i][j], where);
    }
  }
  return m;
}

SystemEntry preset_entry(const std::string& name) {
  if (name == "lorenz1") return {presets::lorenz1(), presets::lorenz_x0()};
  if (name == "lorenz2") return {presets::lorenz2(), presets::lorenz_x0()};
  if (name == "chua") return {presets::chua(), presets::chua_y0()};
  if (name == "chen") return {presets::chen(), presets::chen_z0()};
  throw ConfigError("unknown preset '" + name + "' (lorenz1, lorenz2, chua, chen)");
}

SystemEntry parse_system(const json& obj, const std::string& where) {
  check_keys(obj, where, {"preset", "kind", "name", "params", "A", "B", "initial"});
  SystemEntry e;
  if (obj.contains("preset")) {
    for (const char* k : {"kind", "params", "A", "B"}) {
      if (obj.contains(k)) throw ConfigError(where + ": '" + k + "' cannot be combined with 'preset'");
    }
    e = preset_entry(get_string(obj["preset"], where + ".preset"));
    if (obj.contains("name")) e.spec.name = get_string(obj["name"], where + ".name");
  } else {
    if (!obj.contains("kind")) throw ConfigError(where + " needs 'preset' or 'kind'");
    const std::string kind = get_string(obj["kind"], where + ".kind");
    const std::string name = obj.contains("name") ? get_string(obj["name"], where + ".name") : kind;
    if (kind == "linear-affine") {
      if (obj.contains("params")) throw ConfigError(where + ": linear-affine takes 'A' and 'B', not 'params'");
      if (!obj.contains("A") || !obj.contains("B")) throw ConfigError(where + ": linear-affine needs 'A' and 'B'");
      e.spec = SystemSpec::linear_affine(name, get_matrix(obj["A"], where + ".A"), get_vector(obj["B"], where + ".B"));
    } else if (kind == "lorenz" || kind == "chua" || kind == "chen") {
      if (obj.contains("A") || obj.contains("B")) throw ConfigError(where + ": 'A'/'B' only apply to linear-affine");
      if (!obj.contains("params")) throw ConfigError(where + ": '" + kind + "' needs 'params'");
      const auto& p = obj["params"];
      auto num = [&](const char* key) {
        if (!p.contains(key)) throw ConfigError(where + ".params is missing '" + key + "'");
        return get_number(p[key], where + ".params." + key);
      };
      if (kind == "lorenz") {
        check_keys(p, where + ".params", {"sigma", "rho", "beta"});
        e.spec = SystemSpec::lorenz(name, num("sigma"), num("rho"), num("beta"));
      } else if (kind == "chua") {
        check_keys(p, where + ".params", {"alpha", "beta", "m0", "m1"});
        e.spec = SystemSpec::chua(name, num("alpha"), num("beta"), num("m0"), num("m1"));
      } else {
        check_keys(p, where + ".params", {"a", "b", "c"});
        e.spec = SystemSpec::chen(name, num("a"), num("b"), num("c"));
      }
    } else if (kind == "custom") {
      throw ConfigError(where + ": custom systems need a callable field and are library-only");
    } else {
      throw ConfigError(where + ": unknown kind '" + kind + "'");
    }
    if (!obj.contains("initial")) throw ConfigError(where + " needs 'initial'");
  }
  if (obj.contains("initial")) e.initial = get_vector(obj["initial"], where + ".initial");
  try {
    e.spec.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(where + ": " + err.what());
  }
  if (e.initial.size() != e.spec.dim) throw ConfigError(where + ": initial state has the wrong dimension");
  return e;
}

void parse_hartman(const json& obj, HartmanSettings& h) {
  check_keys(obj, "hartman", {"A", "perturbation", "lower", "upper", "nodes", "quad_step", "tol", "max_iter",
                              "s_cutoff", "verify", "terminal"});
  if (!obj.contains("A")) throw ConfigError("hartman needs 'A'");
  h.A = get_matrix(obj["A"], "hartman.A");
  if (obj.contains("perturbation")) {
    const auto& p = obj["perturbation"];
    check_keys(p, "hartman.perturbation", {"kind", "scale"});
    if (p.contains("kind")) h.perturbation = get_string(p["kind"], "hartman.perturbation.kind");
    if (p.contains("scale")) h.scale = get_number(p["scale"], "hartman.perturbation.scale");
  }
  const auto n = h.A.rows();
  h.lower = obj.contains("lower") ? get_vector(obj["lower"], "hartman.lower") : Vector::Constant(n, -1.0);
  h.upper = obj.contains("upper") ? get_vector(obj["upper"], "hartman.upper") : Vector::Constant(n, 1.0);
  if (obj.contains("nodes")) {
    const auto& v = obj["nodes"];
    if (!v.is_array()) throw ConfigError("hartman.nodes must be an array");
    for (const auto& x : v) h.nodes.push_back(get_int(x, "hartman.nodes"));
  } else {
    h.nodes.assign(static_cast<std::size_t>(n), 41);
  }
  if (obj.contains("quad_step")) h.quad_step = get_number(obj["quad_step"], "hartman.quad_step");
  if (obj.contains("tol")) h.tol = get_number(obj["tol"], "hartman.tol");
  if (obj.contains("max_iter")) h.max_iter = get_int(obj["max_iter"], "hartman.max_iter");
  if (obj.contains("s_cutoff")) h.s_cutoff = get_number(obj["s_cutoff"], "hartman.s_cutoff");
  if (obj.contains("verify")) {
    const auto& v = obj["verify"];
    check_keys(v, "hartman.verify", {"x0", "horizon", "dt"});
    if (v.contains("x0")) {
      if (!v["x0"].is_array()) throw ConfigError("hartman.verify.x0 must be an array of states");
      for (const auto& s : v["x0"]) h.verify_x0.push_back(get_vector(s, "hartman.verify.x0"));
    }
    if (v.contains("horizon")) h.verify_horizon = get_number(v["horizon"], "hartman.verify.horizon");
    if (v.contains("dt")) h.verify_dt = get_number(v["dt"], "hartman.verify.dt");
  }
  if (obj.contains("terminal")) {
    const auto& t = obj["terminal"];
    check_keys(t, "hartman.terminal", {"x0", "y0", "y1", "t1", "c1", "c2"});
    for (const char* k : {"x0", "y0", "y1", "t1"}) {
      if (!t.contains(k)) throw ConfigError(std::string("hartman.terminal needs '") + k + "'");
    }
    h.terminal = true;
    h.t_x0 = get_vector(t["x0"], "hartman.terminal.x0");
    h.t_y0 = get_vector(t["y0"], "hartman.terminal.y0");
    h.t_y1 = get_vector(t["y1"], "hartman.terminal.y1");
    h.t1 = get_number(t["t1"], "hartman.terminal.t1");
    if (t.contains("c1")) h.c1 = get_number(t["c1"], "hartman.terminal.c1");
    if (t.contains("c2")) h.c2 = get_number(t["c2"], "hartman.terminal.c2");
  }
}

void parse_predict(const json& obj, PredictSettings& p) {
  check_keys(obj, "predict", {"segments", "window", "mode", "epsilon"});
  if (obj.contains("segments")) p.segments = get_int(obj["segments"], "predict.segments");
  if (obj.contains("window")) p.window = get_number(obj["window"], "predict.window");
  if (obj.contains("mode")) p.mode = get_string(obj["mode"], "predict.mode");
  if (obj.contains("epsilon")) p.epsilon = get_number(obj["epsilon"], "predict.epsilon");
}

// ---------------------------------------------------------------------------
// artifacts

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Writer {
 public:
  explicit Writer(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.out_dir) {}

  json envelope(const std::string& artifact) const {
    json j;
    j["artifact"] = artifact;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = cfg_.seed;
    return j;
  }

  void report(const std::string& name, const json& j) { text(name + ".json", j.dump(2) + "\n"); }

  /// Uniform table written as a trajectory CSV (t,x1..xn) or a JSON table.
  void table(const std::string& name, const Trajectory& data, const std::vector<std::string>& columns) {
    if (cfg_.format == "json") {
      json j = envelope("table");
      j["columns"] = columns;
      j["t0"] = data.t0();
      j["dt"] = data.dt();
      json rows = json::array();
      for (std::size_t k = 0; k < data.size(); ++k) {
        json row = json::array({data.time(k)});
        for (int i = 0; i < data.dim(); ++i) row.push_back(finite_or_null(data.states()(i, static_cast<Eigen::Index>(k))));
        rows.push_back(std::move(row));
      }
      j["rows"] = std::move(rows);
      report(name, j);
    } else {
      std::ostringstream out;
      write_csv(out, data);
      text(name + ".csv", out.str());
    }
  }

  std::string table_file(const std::string& name) const {
    return cfg_.prefix + name + (cfg_.format == "json" ? ".json" : ".csv");
  }

  const std::vector<fs::path>& written() const { return written_; }

 private:
  void text(const std::string& file, const std::string& content) {
    // Created on first use so failed runs leave nothing behind.
    fs::create_directories(dir_);
    const fs::path path = dir_ / (cfg_.prefix + file);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
    if (!out) throw ConfigError("failed writing " + path.string());
    written_.push_back(path);
  }

  const ExperimentConfig& cfg_;
  fs::path dir_;
  std::vector<fs::path> written_;
};

std::vector<std::string> state_columns(const std::string& sym, int n) {
  std::vector<std::string> c;
  for (int i = 1; i <= n; ++i) c.push_back(sym + std::to_string(i));
  return c;
}

json system_json(const SystemEntry& e) {
  json j;
  j["name"] = e.spec.name;
  j["kind"] = to_string(e.spec.kind);
  j["dim"] = e.spec.dim;
  if (e.spec.kind == SystemKind::linear_affine) {
    j["A"] = to_json(e.spec.A);
    j["B"] = to_json(e.spec.B);
  } else {
    json p = json::object();
    for (const auto& [k, v] : e.spec.params) p[k] = v;
    j["params"] = p;
  }
  j["initial"] = to_json(Vector(e.initial));
  return j;
}

json run_json(const ExperimentConfig& cfg, const std::string& analysis) {
  json j;
  j["analysis"] = analysis;
  j["horizon"] = cfg.horizon;
  j["dt"] = cfg.dt;
  j["method"] = cfg.method == Method::rk4 ? "rk4" : "euler";
  j["similarity_function"] = cfg.similarity;
  return j;
}

Trajectory curve_table(const std::vector<std::pair<double, double>>& curve) {
  Matrix m(1, static_cast<Eigen::Index>(curve.size()));
  for (std::size_t k = 0; k < curve.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = curve[k].second;
  const double dt = curve.size() > 1 ? curve[1].first - curve[0].first : 1.0;
  return Trajectory(curve.front().first, dt, std::move(m));
}

struct Pair {
  const SystemEntry* x;
  const SystemEntry* y;
  Trajectory X, Y;
  std::string label;
};

Pair simulate_pair(const ExperimentConfig& cfg) {
  if (!cfg.y) throw ConfigError("this analysis needs a 'y' system");
  const IntegratorConfig ic{cfg.method, cfg.dt};
  Pair p{&cfg.x, &*cfg.y, integrate(cfg.x.spec, cfg.x.initial, 0.0, cfg.horizon, ic),
         integrate(cfg.y->spec, cfg.y->initial, 0.0, cfg.horizon, ic), cfg.x.spec.name + "&" + cfg.y->spec.name};
  if (p.X.dim() != p.Y.dim()) throw ConfigError("x and y must have the same dimension");
  return p;
}

json similarity_json(const SimilarityReport& r) {
  json j;
  j["pair"] = r.pair;
  j["map_kind"] = r.map_kind;
  j["J_N"] = r.J_N;
  j["rho"] = r.rho;
  j["rho_percent"] = percent(r.rho);
  if (r.K) j["K"] = to_json(*r.K);
  return j;
}

// ---------------------------------------------------------------------------
// subcommands

void cmd_simulate(const ExperimentConfig& cfg, Writer& w) {
  const IntegratorConfig ic{cfg.method, cfg.dt};
  json j = w.envelope("simulation");
  j["run"] = run_json(cfg, "simulate");
  json systems = json::array();
  auto one = [&](const SystemEntry& e, const std::string& role) {
    const Trajectory t = integrate(e.spec, e.initial, 0.0, cfg.horizon, ic);
    w.table(role, t, state_columns(role, t.dim()));
    json s = system_json(e);
    s["role"] = role;
    s["samples"] = t.size();
    s["final_state"] = to_json(t.back());
    s["file"] = w.table_file(role);
    systems.push_back(std::move(s));
  };
  one(cfg.x, "x");
  if (cfg.y) one(*cfg.y, "y");
  j["systems"] = std::move(systems);
  w.report("simulate", j);
}

void cmd_conjugate(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  const auto seq = algorithm1_solve_Kt(p.X, p.Y);
  const int n = p.X.dim();
  Matrix flat(n * n, static_cast<Eigen::Index>(p.X.size()));
  double worst = 0.0, sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < p.X.size(); ++k) {
    const Matrix& K = seq.at(k);
    flat.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Vector>(Matrix(K.transpose()).data(), n * n);
    const std::size_t block = std::min(k, seq.size() - 1);
    if (!seq.invertible[block]) continue;
    const double e = (K * p.X.state(k) - p.Y.state(k)).squaredNorm();
    worst = std::max(worst, std::sqrt(e));
    if (k >= 1) {
      sum += e;
      ++used;
    }
  }
  const double J = used ? sum / static_cast<double>(used) : 0.0;
  std::vector<std::string> cols;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) cols.push_back("K" + std::to_string(i) + std::to_string(j));
  w.table("kt", Trajectory(p.X.t0(), p.X.dt(), flat), cols);

  json j = w.envelope("conjugacy_report");
  j["run"] = run_json(cfg, "algorithm1");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  json s;
  s["pair"] = p.label;
  s["map_kind"] = "sequence";
  s["J_N"] = J;
  s["rho"] = similarity_degree(J);
  s["rho_percent"] = percent(similarity_degree(J));
  j["similarity"] = s;
  j["blocks"] = seq.size();
  j["flagged"] = seq.flagged();
  j["flagged_fraction"] = static_cast<double>(seq.flagged()) / static_cast<double>(seq.size());
  j["max_sample_residual"] = worst;
  j["kt_file"] = w.table_file("kt");

  if (cfg.polyline != "none") {
    Trajectory px, py;
    if (cfg.polyline == "euler") {
      const int m = cfg.polyline_segments > 0 ? cfg.polyline_segments : static_cast<int>(p.X.steps());
      px = augment_time(euler_polyline(p.x->spec, p.x->initial, cfg.horizon, m));
      py = augment_time(euler_polyline(p.y->spec, p.y->initial, cfg.horizon, m));
    } else {
      px = augment_time(p.X);
      py = augment_time(p.Y);
    }
    const auto pmap = build_polyline_conjugacy(px, py);
    std::size_t singular = 0;
    for (const auto& a : pmap.maps()) singular += a.invertible() ? 0 : 1;
    json pj;
    pj["source"] = cfg.polyline;
    pj["segments"] = pmap.segments();
    pj["residual"] = polyline_residual(pmap, px, py);
    pj["singular_segments"] = singular;
    pj["file"] = cfg.prefix + "polyline_map.json";
    j["polyline"] = pj;
    json m = w.envelope("piecewise_map");
    m["map"] = json::parse(to_json(pmap));
    w.report("polyline_map", m);
  }
  w.report("conjugate", j);
}

json algorithm2_json(const Algorithm2Result& r, const Trajectory& X) {
  json j = similarity_json(r.report);
  j["initial_rho"] = r.initial_rho;
  j["initial_percent"] = percent(r.initial_rho);
  j["final_rho"] = r.report.rho;
  j["final_percent"] = percent(r.report.rho);
  j["winner_index"] = r.index;
  j["winner_time"] = X.time(r.index);
  j["all_flagged"] = r.all_flagged;
  std::size_t flagged = 0;
  for (double v : r.candidate_rho) flagged += std::isnan(v) ? 1 : 0;
  j["flagged_candidates"] = flagged;
  return j;
}

void cmd_similar(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  auto r = algorithm2_best_constant_K(p.X, p.Y, cfg.threads);
  r.report.pair = p.label;
  w.table("curve", curve_table(r.report.curve), {"rho"});
  Matrix cand(2, static_cast<Eigen::Index>(r.candidate_rho.size()));
  for (std::size_t i = 0; i < r.candidate_rho.size(); ++i) {
    cand(0, static_cast<Eigen::Index>(i)) = r.candidate_rho[i];
    cand(1, static_cast<Eigen::Index>(i)) = r.best_so_far[i];
  }
  w.table("candidates", Trajectory(p.X.t0(), p.X.dt(), cand), {"candidate_rho", "best_so_far"});
  json j = w.envelope("similarity_report");
  j["run"] = run_json(cfg, "algorithm2");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  j["similarity"] = algorithm2_json(r, p.X);
  j["curve_file"] = w.table_file("curve");
  j["candidates_file"] = w.table_file("candidates");
  w.report("similar", j);
}

void cmd_lsq(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  const Matrix K = best_constant_K_least_squares(p.X, p.Y);
  const auto rep = make_report(p.label, K, p.X, p.Y);
  w.table("curve", curve_table(rep.curve), {"rho"});
  json j = w.envelope("similarity_report");
  j["run"] = run_json(cfg, "least-squares");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  j["similarity"] = similarity_json(rep);
  j["stationarity_residual"] = stationarity_residual(K, p.X, p.Y);
  j["curvature"] = curvature_check(p.X);
  j["curve_file"] = w.table_file("curve");
  w.report("lsq", j);
}

void cmd_polyfit(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  const auto poly = fit_polynomial_map(p.X, p.Y, cfg.poly_degree);
  const auto rep = make_report(p.label, poly, p.X, p.Y);
  w.table("curve", curve_table(rep.curve), {"rho"});
  json j = w.envelope("similarity_report");
  j["run"] = run_json(cfg, "polyfit");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  j["similarity"] = similarity_json(rep);
  json pj;
  pj["degree"] = poly.degree;
  pj["exponents"] = poly.exponents;
  pj["coefficients"] = to_json(poly.coefficients);
  pj["rank_deficient"] = poly.rank_deficient;
  j["polynomial"] = pj;
  j["curve_file"] = w.table_file("curve");
  w.report("polyfit", j);
}

ConjugacyMap adjoint_map(const ExperimentConfig& cfg, const Pair& p) {
  const int n = p.X.dim();
  if (cfg.adjoint_map == "identity") return Matrix(Matrix::Identity(n, n));
  if (cfg.adjoint_map == "algorithm1") return algorithm1_solve_Kt(p.X, p.Y);
  if (cfg.adjoint_map == "algorithm2") return algorithm2_best_constant_K(p.X, p.Y, cfg.threads).K;
  return best_constant_K_least_squares(p.X, p.Y);
}

void cmd_adjoint(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  const ConjugacyMap K = adjoint_map(cfg, p);
  const auto path = integrate_adjoints(p.X, p.Y, K, p.x->spec, p.y->spec);
  const int n = p.X.dim();
  Matrix data(2 * n, static_cast<Eigen::Index>(path.times.size()));
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    data.col(static_cast<Eigen::Index>(k)) << path.lambda[k], path.mu[k];
  }
  auto cols = state_columns("lambda", n);
  for (const auto& c : state_columns("mu", n)) cols.push_back(c);
  w.table("adjoint", Trajectory(p.X.t0(), p.X.dt(), data), cols);
  const double T = p.X.t_end() - p.X.t0();
  json j = w.envelope("adjoint_report");
  j["run"] = run_json(cfg, "adjoint");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  j["map"] = cfg.adjoint_map;
  j["similarity"] = similarity_json(make_report(p.label, K, p.X, p.Y, false));
  j["lambda_sup"] = path.lambda_sup();
  j["mu_sup"] = path.mu_sup();
  j["hamiltonian_t0"] = hamiltonian(p.X.t0(), p.X.front(), p.Y.front(), K, 0, path.lambda.front(), path.mu.front(), T,
                                    p.x->spec, p.y->spec);
  if (const auto* m = std::get_if<Matrix>(&K)) {
    j["stationarity_residual"] = stationarity_residual(*m, p.X, p.Y);
    j["curvature"] = curvature_check(p.X);
  }
  j["adjoint_file"] = w.table_file("adjoint");
  w.report("adjoint", j);
}

void cmd_kkt(const ExperimentConfig& cfg, Writer& w) {
  const Pair p = simulate_pair(cfg);
  const auto seq = algorithm1_solve_Kt(p.X, p.Y);
  const auto sens = variational_matrix(p.y->spec, p.Y);
  const auto R = kkt_residual(seq, p.X, p.Y, sens);
  std::vector<Matrix> R2;
  const bool linear = p.y->spec.kind == SystemKind::linear_affine;
  if (linear) R2 = kkt2_residual(seq, p.X, p.Y, p.y->spec.A);
  Matrix data(linear ? 3 : 2, static_cast<Eigen::Index>(R.size()));
  double worst = 0.0, gap = 0.0;
  for (std::size_t k = 0; k < R.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    data(0, c) = R[k].norm();
    data(1, c) = R[k].lpNorm<Eigen::Infinity>();
    worst = std::max(worst, data(1, c));
    if (linear) {
      data(2, c) = (R[k] - R2[k]).lpNorm<Eigen::Infinity>();
      gap = std::max(gap, data(2, c));
    }
  }
  std::vector<std::string> cols{"frobenius", "max_abs"};
  if (linear) cols.push_back("gap_to_exponential");
  w.table("kkt", Trajectory(p.X.t0(), p.X.dt(), data), cols);
  json j = w.envelope("kkt_report");
  j["run"] = run_json(cfg, "kkt");
  j["x"] = system_json(*p.x);
  j["y"] = system_json(*p.y);
  j["flagged"] = seq.flagged();
  j["max_abs_residual"] = worst;
  if (linear) j["max_gap_to_exponential"] = gap;
  j["kkt_file"] = w.table_file("kkt");
  w.report("kkt", j);
}

void cmd_hartman(const ExperimentConfig& cfg, Writer& w) {
  const auto& h = cfg.hartman;
  const auto n = h.A.rows();
  std::function<Vector(const Vector&)> r;
  double lip = 0.0;
  Matrix grad = Matrix::Zero(n, n);
  if (h.perturbation == "sine") {
    const double s = h.scale;
    r = [s](const Vector& y) -> Vector { return s * y.array().sin().matrix(); };
    lip = std::abs(s);
    grad = s * Matrix::Identity(n, n);
  } else {
    r = [](const Vector& y) -> Vector { return Vector::Zero(y.size()); };
  }
  auto problem = HartmanProblem::from_matrix(h.A, r, lip, grad);
  if (h.perturbation == "sine") problem.r_sup = std::abs(h.scale) * std::sqrt(static_cast<double>(n));

  FixedPointOptions o;
  o.lower = h.lower;
  o.upper = h.upper;
  o.nodes = h.nodes;
  o.s_cutoff = h.s_cutoff;
  o.quad_step = h.quad_step;
  o.tol = h.tol;
  o.max_iter = h.max_iter;
  o.threads = cfg.threads;
  const auto res = solve_conjugacy_fixed_point(problem, o);

  json j = w.envelope("hartman_report");
  j["run"] = run_json(cfg, "hartman");
  j["A"] = to_json(h.A);
  j["perturbation"] = {{"kind", h.perturbation}, {"scale", h.scale}};
  j["M"] = problem.M;
  j["eta"] = problem.eta;
  j["certificate"] = res.certificate;
  j["iterations"] = res.iterations;
  j["s_cutoff"] = res.s_cutoff;
  j["truncation_bound"] = res.truncation_bound;
  j["sup_changes"] = res.sup_changes;
  j["ratios"] = res.ratios;
  json checks = json::array();
  for (const auto& x0 : h.verify_x0) {
    if (x0.size() != n) throw ConfigError("hartman.verify.x0 has the wrong dimension");
    checks.push_back({{"x0", to_json(x0)}, {"residual", verify_conjugacy(problem, res.g, x0, h.verify_horizon, h.verify_dt)}});
  }
  j["verification"] = checks;
  if (h.terminal) {
    const auto tm = terminal_map(problem, h.t_x0, h.t_y0, h.t_y1, h.t1);
    json t;
    t["t1"] = h.t1;
    t["gramian"] = to_json(tm.gramian);
    t["gramian_condition"] = tm.gramian_condition;
    t["endpoint_residual"] = tm.endpoint_residual;
    t["iterations"] = tm.iterations;
    t["start_error"] = (tm.y.front() - h.t_y0).norm();
    t["decay_factor"] = decay_factor(problem.M, problem.eta, h.c1, h.c2, h.t_x0.norm(), h.t1);
    j["terminal"] = t;
    Matrix data(1 + n, static_cast<Eigen::Index>(tm.times.size()));
    for (std::size_t k = 0; k < tm.times.size(); ++k) data.col(static_cast<Eigen::Index>(k)) << tm.K[k], tm.y[k];
    std::vector<std::string> cols{"K"};
    for (const auto& c : state_columns("y", static_cast<int>(n))) cols.push_back(c);
    w.table("terminal", Trajectory(0.0, tm.times.size() > 1 ? tm.times[1] : h.t1, data), cols);
    j["terminal_file"] = w.table_file("terminal");
  }
  json g = w.envelope("grid_function");
  g["grid"] = json::parse(res.g.to_json());
  w.report("hartman_grid", g);
  j["grid_file"] = cfg.prefix + "hartman_grid.json";
  w.report("hartman", j);
}

void cmd_predict(const ExperimentConfig& cfg, Writer& w) {
  const auto& ps = cfg.predict;
  const auto steps = static_cast<std::size_t>(std::llround(ps.window / cfg.dt));
  const auto nseg = static_cast<std::size_t>(ps.segments);
  const IntegratorConfig ic{cfg.method, cfg.dt};
  const bool future = ps.mode == "future";
  // History covers [-nW, 0] and the truth sits at W; the mirror for the past.
  const double t0 = future ? -static_cast<double>(nseg) * ps.window : -ps.window;
  const Trajectory full = integrate(cfg.x.spec, cfg.x.initial, t0, static_cast<double>(nseg + 1) * ps.window, ic);
  PredictionResult r;
  Vector truth;
  const PerturbationSpec eps{ps.epsilon, cfg.seed};
  if (future) {
    const Trajectory hist(full.t0(), full.dt(), full.states().leftCols(static_cast<Eigen::Index>(nseg * steps + 1)));
    r = predict_future(SegmentSeries::split(hist, nseg, steps), &cfg.x.spec, eps, ic);
    truth = full.back();
  } else {
    const Trajectory fut(full.time(steps), full.dt(), full.states().rightCols(static_cast<Eigen::Index>(nseg * steps + 1)));
    r = infer_past(SegmentSeries::split(fut, nseg, steps), &cfg.x.spec, eps, ic);
    truth = full.front();
  }
  w.table("prediction", r.segment, state_columns("x", r.segment.dim()));
  json j = w.envelope("prediction_report");
  j["run"] = run_json(cfg, "predict");
  j["x"] = system_json(cfg.x);
  j["mode"] = ps.mode;
  j["segments"] = ps.segments;
  j["window"] = ps.window;
  j["epsilon"] = ps.epsilon;
  j["state"] = to_json(r.state);
  j["truth"] = to_json(truth);
  j["error"] = (r.state - truth).norm();
  j["relative_error"] = (r.state - truth).norm() / std::max(truth.norm(), 1e-300);
  j["K"] = to_json(r.K);
  j["fit_residual"] = r.fit_residual;
  j["condition"] = r.condition;
  j["prediction_file"] = w.table_file("prediction");
  w.report("predict", j);
}

void cmd_table1(const ExperimentConfig& cfg, Writer& w) {
  const SystemEntry x = preset_entry("lorenz1");
  const std::vector<std::pair<std::string, SystemEntry>> pairs{
      {"Lorenz1&Lorenz2", preset_entry("lorenz2")}, {"Lorenz&Chua", preset_entry("chua")}, {"Lorenz&Chen", preset_entry("chen")}};
  const IntegratorConfig ic{cfg.method, cfg.dt};
  const Trajectory X = integrate(x.spec, x.initial, 0.0, cfg.horizon, ic);
  json rows = json::array();
  Matrix curves(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(X.steps()));
  std::vector<double> initial, increase;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Trajectory Y = integrate(pairs[k].second.spec, pairs[k].second.initial, 0.0, cfg.horizon, ic);
    auto r = algorithm2_best_constant_K(X, Y, cfg.threads);
    r.report.pair = pairs[k].first;
    json row = algorithm2_json(r, X);
    row["y"] = system_json(pairs[k].second);
    row["increase"] = r.report.rho - r.initial_rho;
    rows.push_back(row);
    for (std::size_t i = 0; i < r.report.curve.size(); ++i) {
      curves(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = r.report.curve[i].second;
    }
    initial.push_back(r.initial_rho);
    increase.push_back(r.report.rho - r.initial_rho);
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return initial[a] > initial[b]; });
  json ranking = json::array();
  for (std::size_t i : order) ranking.push_back(pairs[i].first);
  const auto most = static_cast<std::size_t>(std::max_element(increase.begin(), increase.end()) - increase.begin());

  w.table("table1_curves", Trajectory(X.time(1), X.dt(), curves), {"Lorenz1&Lorenz2", "Lorenz&Chua", "Lorenz&Chen"});
  json j = w.envelope("table1");
  j["run"] = run_json(cfg, "table1");
  j["x"] = system_json(x);
  j["rows"] = rows;
  j["initial_ranking"] = ranking;
  j["largest_increase"] = pairs[most].first;
  j["curves_file"] = w.table_file("table1_curves");
  w.report("table1", j);
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
  if (horizon / dt > 1e7) throw ConfigError("horizon/dt exceeds 1e7 steps");
  if (horizon / dt < 1.0) throw ConfigError("horizon must cover at least one step");
  if (similarity != "log1p-ratio") throw ConfigError("unknown similarity function '" + similarity + "'");
  if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
  if (out_dir.empty()) throw ConfigError("output directory is empty");
  if (prefix.find('/') != std::string::npos) throw ConfigError("output prefix cannot contain '/'");
  if (polyline != "none" && polyline != "samples" && polyline != "euler") {
    throw ConfigError("conjugate.polyline must be none, samples or euler");
  }
  if (polyline_segments < 0) throw ConfigError("conjugate.segments must be >= 0");
  if (poly_degree < 0 || poly_degree > 8) throw ConfigError("polyfit.degree must be in 0..8");
  static const std::set<std::string> maps{"least-squares", "identity", "algorithm1", "algorithm2"};
  if (!maps.count(adjoint_map)) throw ConfigError("adjoint.map must be least-squares, identity, algorithm1 or algorithm2");
  if (y && y->spec.dim != x.spec.dim) throw ConfigError("x and y must have the same dimension");
  if (predict.segments < 2) throw ConfigError("predict.segments must be >= 2");
  if (!(predict.window > 0.0)) throw ConfigError("predict.window must be > 0");
  if (std::llround(predict.window / dt) < 1) throw ConfigError("predict.window must cover at least one step");
  if (predict.mode != "future" && predict.mode != "past") throw ConfigError("predict.mode must be future or past");
  if (!(predict.epsilon >= 0.0)) throw ConfigError("predict.epsilon must be >= 0");
  if (hartman.A.size() != 0) {
    const auto n = hartman.A.rows();
    if (hartman.A.cols() != n) throw ConfigError("hartman.A must be square");
    if (hartman.perturbation != "sine" && hartman.perturbation != "zero") {
      throw ConfigError("hartman.perturbation.kind must be sine or zero");
    }
    if (hartman.lower.size() != n || hartman.upper.size() != n || hartman.nodes.size() != static_cast<std::size_t>(n)) {
      throw ConfigError("hartman box and nodes must match the dimension of A");
    }
    if (!(hartman.quad_step > 0.0) || !(hartman.tol > 0.0) || hartman.max_iter < 1) {
      throw ConfigError("hartman.quad_step, tol and max_iter must be positive");
    }
    if (hartman.terminal && (hartman.t_x0.size() != n || hartman.t_y0.size() != n || hartman.t_y1.size() != n)) {
      throw ConfigError("hartman.terminal states must match the dimension of A");
    }
  }
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.x = preset_entry("lorenz1");
  c.y = preset_entry("lorenz2");
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"version", "analysis", "x", "y", "horizon", "dt", "method", "seed", "similarity", "output", "format",
              "threads", "conjugate", "polyfit", "adjoint", "hartman", "predict"});
  if (!j.contains("version")) throw ConfigError("config needs a 'version' field");
  if (get_int(j["version"], "version") != kConfigVersion) {
    throw ConfigError("unsupported config version " + j["version"].dump() + " (expected " + std::to_string(kConfigVersion) + ")");
  }
  ExperimentConfig c = default_config();
  if (j.contains("analysis")) {
    const std::string a = get_string(j["analysis"], "analysis");
    static const std::set<std::string> known{"simulate", "algorithm1", "algorithm2", "least-squares", "polyfit",
                                             "adjoint", "kkt", "hartman", "predict", "table1"};
    if (!known.count(a)) throw ConfigError("unknown analysis '" + a + "'");
    c.analysis = a;
  }
  if (j.contains("x")) c.x = parse_system(j["x"], "x");
  if (j.contains("y")) {
    if (j["y"].is_null()) {
      c.y.reset();
    } else {
      c.y = parse_system(j["y"], "y");
    }
  }
  if (j.contains("horizon")) c.horizon = get_number(j["horizon"], "horizon");
  if (j.contains("dt")) c.dt = get_number(j["dt"], "dt");
  if (j.contains("method")) {
    const std::string m = get_string(j["method"], "method");
    if (m == "rk4") {
      c.method = Method::rk4;
    } else if (m == "euler") {
      c.method = Method::euler;
    } else {
      throw ConfigError("method must be rk4 or euler");
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("similarity")) c.similarity = get_string(j["similarity"], "similarity");
  if (j.contains("output")) {
    const auto& o = j["output"];
    check_keys(o, "output", {"dir", "prefix"});
    if (o.contains("dir")) c.out_dir = get_string(o["dir"], "output.dir");
    if (o.contains("prefix")) c.prefix = get_string(o["prefix"], "output.prefix");
  }
  if (j.contains("format")) c.format = get_string(j["format"], "format");
  if (j.contains("threads")) {
    const int t = get_int(j["threads"], "threads");
    if (t < 0) throw ConfigError("threads must be >= 0");
    c.threads = static_cast<unsigned>(t);
  }
  if (j.contains("conjugate")) {
    const auto& o = j["conjugate"];
    check_keys(o, "conjugate", {"polyline", "segments"});
    if (o.contains("polyline")) c.polyline = get_string(o["polyline"], "conjugate.polyline");
    if (o.contains("segments")) c.polyline_segments = get_int(o["segments"], "conjugate.segments");
  }
  if (j.contains("polyfit")) {
    check_keys(j["polyfit"], "polyfit", {"degree"});
    if (j["polyfit"].contains("degree")) c.poly_degree = get_int(j["polyfit"]["degree"], "polyfit.degree");
  }
  if (j.contains("adjoint")) {
    check_keys(j["adjoint"], "adjoint", {"map"});
    if (j["adjoint"].contains("map")) c.adjoint_map = get_string(j["adjoint"]["map"], "adjoint.map");
  }
  if (j.contains("hartman")) parse_hartman(j["hartman"], c.hartman);
  if (j.contains("predict")) parse_predict(j["predict"], c.predict);
  c.validate();
  return c;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "conjugate", "similar", "lsq",     "polyfit",
                                              "adjoint",  "kkt",       "hartman", "predict", "table1"};
  return names;
}

namespace {

std::string analysis_of(const std::string& command) {
  if (command == "conjugate") return "algorithm1";
  if (command == "similar") return "algorithm2";
  if (command == "lsq") return "least-squares";
  return command;
}

}  // namespace

std::vector<fs::path> run(const std::string& command, const ExperimentConfig& cfg) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), command) == names.end()) throw ConfigError("unknown subcommand '" + command + "'");
  if (cfg.analysis && *cfg.analysis != analysis_of(command)) {
    throw ConfigError("config analysis '" + *cfg.analysis + "' does not match subcommand '" + command + "'");
  }
  cfg.validate();
  if (command == "hartman" && cfg.hartman.A.size() == 0) throw ConfigError("hartman needs a 'hartman' section");
  const bool needs_pair = command == "conjugate" || command == "similar" || command == "lsq" || command == "polyfit" ||
                          command == "adjoint" || command == "kkt";
  if (needs_pair && !cfg.y) throw ConfigError("subcommand '" + command + "' needs a 'y' system");

  Writer w(cfg);
  if (command == "simulate") cmd_simulate(cfg, w);
  if (command == "conjugate") cmd_conjugate(cfg, w);
  if (command == "similar") cmd_similar(cfg, w);
  if (command == "lsq") cmd_lsq(cfg, w);
  if (command == "polyfit") cmd_polyfit(cfg, w);
  if (command == "adjoint") cmd_adjoint(cfg, w);
  if (command == "kkt") cmd_kkt(cfg, w);
  if (command == "hartman") cmd_hartman(cfg, w);
  if (command == "predict") cmd_predict(cfg, w);
  if (command == "table1") cmd_table1(cfg, w);
  return w.written();
}

std::string percent(double rho) {
  if (!std::isfinite(rho)) throw InvalidArgument("percent of a non-finite value");
  // nearbyint follows the current rounding mode, which defaults to ties-to-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double hundredths = std::nearbyint(rho * 10000.0);
  std::fesetround(saved);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
  return buf;
}

}  // namespace conjlab::cli
