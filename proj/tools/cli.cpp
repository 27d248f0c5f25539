#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <variant>

#include "selfsim/asymptotics.hpp"
#include "selfsim/evolve.hpp"
#include "selfsim/functionals.hpp"
#include "selfsim/ode.hpp"
#include "selfsim/shooting.hpp"

#ifndef SELFSIM_CODE_VERSION
#define SELFSIM_CODE_VERSION "unknown"
#endif

namespace selfsim::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / kPi;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::optional<int> p, q, n;
  bool axis = false;
  std::optional<double> a;
  int kmax = 6;
  std::optional<int> k;
  std::optional<double> rmax;
  std::optional<double> tol;
  std::string out;
  std::string format = "json";
  int threads = 1;

  std::optional<double> amin, amax;
  std::optional<int> per_decade;
  std::optional<double> alpha_deg;
  std::string preset;
  std::optional<double> R;
  std::optional<double> t_end;
  double h = 0.01;
  std::string boundary = "extrapolate";
  std::string kernel = "auto";
  std::string reference = "companion";
  std::optional<double> t0;
  double x0r = 0.0, x0u = 0.0;
  int draws = 1000;
  unsigned long seed = 1;
  double diffusion = 4.0;
  std::string functional = "J";
  std::string source = "shrinker";
  std::optional<double> step;
  std::optional<double> window;
  std::optional<double> eps;
  std::optional<int> genus;
  std::string input;
  std::vector<double> fit_window;
};

// ---------------------------------------------------------------- output

using Cell = std::variant<double, long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return num(*d);
  if (auto l = std::get_if<long>(&c)) return *l;
  return std::get<std::string>(c);
}

std::string to_csv(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return fmt17(*d);
  if (auto l = std::get_if<long>(&c)) return std::to_string(*l);
  return std::get<std::string>(c);
}

std::string sha256_bytes(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, fs::path dir, std::string format, std::ostream& out)
      : command_(std::move(command)), argv_(std::move(argv)), dir_(std::move(dir)), format_(std::move(format)), out_(out) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  std::ostream& out() { return out_; }
  const fs::path& dir() const { return dir_; }
  json& config() { return config_; }
  void set_params(const FlowParams& p) { params_ = p; }

  void write_text(const std::string& name, const std::string& text) {
    const fs::path path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    os.close();
    if (!os) throw IoError("write failed for " + path.string());
    outputs_.push_back(name);
  }

  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

  void write_profile(const std::string& name, const ProfileCurve& curve) {
    std::ostringstream os;
    write_profile_csv(os, curve);
    write_text(name, os.str());
  }

  // Tables follow --format; the stem gets .csv or .json.
  void write_table(const std::string& stem, const Table& t) {
    if (format_ == "csv") {
      std::string text;
      for (std::size_t i = 0; i < t.columns.size(); ++i) text += (i ? "," : "") + t.columns[i];
      text += "\n";
      for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + to_csv(row[i]);
        text += "\n";
      }
      write_text(stem + ".csv", text);
    } else {
      json arr = json::array();
      for (const auto& row : t.rows) {
        json o = json::object();
        for (std::size_t i = 0; i < row.size(); ++i) o[t.columns[i]] = to_json(row[i]);
        arr.push_back(o);
      }
      write_json(stem + ".json", arr);
    }
  }

  void adopt(const std::vector<fs::path>& files) {
    for (const auto& f : files) outputs_.push_back(fs::relative(f, dir_).generic_string());
  }

  // Manifest last, through a rename so readers never see a partial file.
  void finish() {
    json outs = json::array();
    for (const auto& name : outputs_) outs.push_back({{"path", name}, {"sha256", sha256_file(dir_ / name)}});
    json m = {{"command", command_},
              {"argv", argv_},
              {"params", params_ ? json{{"p", params_->p()}, {"q", params_->q()}} : json(nullptr)},
              {"config", config_},
              {"timestamp", utc_timestamp()},
              {"code_version", SELFSIM_CODE_VERSION},
              {"outputs", outs}};
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw IoError("cannot write " + tmp.string());
      os << m.dump(2) << "\n";
      if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, dir_ / "manifest.json", ec);
    if (ec) throw IoError("cannot finalize manifest: " + ec.message());
    out_ << "wrote " << outputs_.size() << " file(s) and manifest.json to " << dir_.string() << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  fs::path dir_;
  std::string format_;
  std::ostream& out_;
  json config_ = json::object();
  std::optional<FlowParams> params_;
  std::vector<std::string> outputs_;
};

// ---------------------------------------------------------------- helpers

enum class ParamDefault { Axial, Balanced };

FlowParams resolve_params(const Options& o, ParamDefault def, FlowParams fallback) {
  if (o.p || o.q) {
    if (!o.p || !o.q) throw DomainError("give both --p and --q");
    if (o.n && *o.n != *o.p + *o.q) throw DomainError("--n disagrees with --p + --q");
    return FlowParams(*o.p, *o.q);
  }
  if (o.n) {
    if (o.axis || def == ParamDefault::Axial) return FlowParams::axial(*o.n);
    const int p = *o.n / 2;
    return FlowParams(p, *o.n - p);
  }
  return fallback;
}

IntegratorConfig base_config(const Options& o) {
  IntegratorConfig cfg;
  if (o.tol) cfg.rel_tol = *o.tol;
  if (o.rmax) cfg.r_max = *o.rmax;
  return cfg;
}

json params_json(const FlowParams& p) { return {{"p", p.p()}, {"q", p.q()}, {"n", p.n()}}; }

json record_json(const ExpanderRecord& r) {
  return {{"a", r.a},          {"lambda", num(r.lambda_a)}, {"alpha", num(r.alpha_a)},
          {"alpha_deg", num(r.alpha_a * kDeg)}, {"crossings", r.crossings}, {"stabilized", r.stabilized},
          {"error_bar", num(r.error_bar)},       {"status", r.status}};
}

Table sweep_table(const std::vector<ExpanderRecord>& recs) {
  Table t{{"a", "lambda", "alpha", "crossings", "status"}, {}};
  for (const auto& r : recs) t.rows.push_back({r.a, r.lambda_a, r.alpha_a, long(r.crossings), r.status});
  return t;
}

json config_json(const IntegratorConfig& c) {
  return {{"rel_tol", c.rel_tol}, {"abs_tol", c.abs_tol}, {"r_max", c.r_max}, {"max_ds", c.max_ds}, {"max_steps", c.max_steps}};
}

// Initial curve and time window for the flow presets.
struct FlowSetup {
  ProfileCurve init;
  double t0 = 0.0;
  double t_end = 0.0;
  std::optional<ScalingMode> mode;  // set for self-similar presets
  ProfileCurve profile;              // the self-similar profile (t = -1 or t = 1)
  std::optional<double> extinction;  // exact singular time where known
};

FlowSetup flow_setup(const Options& o, const FlowParams& params) {
  FlowSetup fs;
  const int n = params.n();
  if (o.preset == "sphere") {
    const double R = o.R.value_or(1.0);
    fs.init = sphere_profile(R, params);
    fs.extinction = R * R / (2.0 * (n - 1));
    fs.t_end = o.t_end.value_or(*fs.extinction);
  } else if (o.preset == "cylinder") {
    const double R = o.R.value_or(1.0);
    fs.init = cylinder_profile(R, o.rmax.value_or(5.0), params);
    fs.extinction = R * R / (2.0 * (params.q() - 1));
    fs.t_end = o.t_end.value_or(0.75 * *fs.extinction);
  } else if (o.preset == "expander") {
    IntegratorConfig cfg = base_config(o);
    cfg.r_max = o.rmax.value_or(8.0);
    const double a = o.a.value_or(1.0);
    fs.profile = integrate_profile(EquationKind::Expander, series_start(EquationKind::Expander, a, params), params, cfg);
    fs.init = fs.profile;
    fs.t0 = 1.0;
    fs.t_end = o.t_end.value_or(4.0);
    fs.mode = ScalingMode::Expand;
  } else if (o.preset == "shrinker") {
    const int k = o.k.value_or(1);
    const auto recs = find_shrinkers(k, params, IntegratorConfig{});
    if (static_cast<int>(recs.size()) < k) throw NumericalError("shrinker preset: N^" + std::to_string(k) + " not found");
    fs.profile = shrinker_profile(recs[k - 1], params, IntegratorConfig{});
    fs.init = fs.profile;
    fs.t0 = -1.0;
    fs.t_end = o.t_end.value_or(-0.25);
    fs.mode = ScalingMode::Shrink;
  } else {
    throw DomainError("unknown flow preset '" + o.preset + "' (sphere, cylinder, expander, shrinker)");
  }
  if (!(fs.t_end > fs.t0)) throw DomainError("--t-end must exceed the preset's start time");
  return fs;
}

SchemeConfig scheme_from(const Options& o) {
  SchemeConfig sc;
  sc.resample_tol = o.h;
  if (o.boundary == "extrapolate") sc.outer = OuterBoundary::Extrapolate;
  else if (o.boundary == "ray") sc.outer = OuterBoundary::Ray;
  else throw DomainError("--boundary must be extrapolate or ray");
  if (o.kernel == "auto") sc.kernel = KernelChoice::Auto;
  else if (o.kernel == "scalar") sc.kernel = KernelChoice::Scalar;
  else if (o.kernel == "avx2") sc.kernel = KernelChoice::Avx2;
  else throw DomainError("--kernel must be auto, scalar or avx2");
  sc.check();
  return sc;
}

json flow_json(const FlowTrajectory& tr, const FlowSetup& fs) {
  json j = {{"t0", fs.t0},
            {"t_end", fs.t_end},
            {"stop", tr.stop == FlowStop::Singular ? "singular" : "completed"},
            {"singular_time", tr.singular_time ? num(*tr.singular_time) : json(nullptr)},
            {"final_t", tr.states.back().t},
            {"kernel", tr.kernel},
            {"steps", tr.steps.size()},
            {"snapshots", tr.states.size()}};
  if (fs.extinction) j["exact_singular_time"] = *fs.extinction;
  if (fs.mode) j["self_similarity_residual"] = num(self_similarity_residual(tr, fs.profile, *fs.mode));
  return j;
}

// ---------------------------------------------------------------- commands

using Handler = std::function<void(const Options&, Run&)>;

void cmd_companion(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto cfg = base_config(o);
  const double a = o.a.value_or(1.0);
  const auto res = companion(params, cfg, a);
  const auto cone = cone_slope(params);
  run.config() = {{"a", a}, {"integrator", config_json(cfg)}};
  run.write_profile("companion.csv", res.curve);
  run.write_json("companion.json", {{"kind", "Minimal"},
                                    {"params", params_json(params)},
                                    {"a", a},
                                    {"lambda_s", cone.lambda_s},
                                    {"crossings", res.crossings},
                                    {"X", res.X},
                                    {"Y", res.Y},
                                    {"distance", res.distance},
                                    {"termination", to_string(res.curve.termination.tag)}});
  run.out() << "companion: crossings " << res.crossings << ", distance to fixed point " << fmt6(res.distance) << "\n";
}

void cmd_expander(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  if (!o.a) throw DomainError("expander needs --a");
  const auto cfg = base_config(o);
  const auto rec = expander_slope(*o.a, params, cfg);
  const auto curve = integrate_profile(EquationKind::Expander, series_start(EquationKind::Expander, *o.a, params), params, cfg);
  run.config() = {{"a", *o.a}, {"integrator", config_json(cfg)}};
  run.write_profile("expander.csv", curve);
  auto j = record_json(rec);
  j["kind"] = "Expander";
  j["params"] = params_json(params);
  j["termination"] = to_string(curve.termination.tag);
  run.write_json("expander.json", j);
  run.out() << "expander a=" << fmt6(*o.a) << ": alpha " << fmt6(rec.alpha_a * kDeg) << " deg, lambda " << fmt6(rec.lambda_a)
            << (rec.status.empty() ? "" : " (" + rec.status + ")") << "\n";
}

void cmd_alpha_curve(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto cfg = base_config(o);
  const double lo = o.amin.value_or(1e-4), hi = o.amax.value_or(1e-1);
  const int per = o.per_decade.value_or(100);
  const auto ac = alpha_curve(log_grid(lo, hi, per), params, cfg, o.threads);
  run.config() = {{"amin", lo}, {"amax", hi}, {"per_decade", per}, {"threads", o.threads}, {"integrator", config_json(cfg)}};
  run.write_table("alpha_curve", sweep_table(ac.records));
  run.write_table("extrema", sweep_table(ac.extrema));
  run.out() << "alpha-curve: " << ac.records.size() << " samples, " << ac.extrema.size() << " extrema\n";
}

void cmd_critical_angle(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Axial, FlowParams::axial(3));
  run.set_params(params);
  const auto cfg = base_config(o);
  const auto res = critical_angle(params, cfg, o.threads);
  run.config() = {{"threads", o.threads}, {"integrator", config_json(cfg)}};
  run.write_json("critical_angle.json", {{"params", params_json(params)},
                                         {"alpha_crit", res.alpha_crit},
                                         {"alpha_crit_deg", res.alpha_crit * kDeg},
                                         {"argmin_a", res.argmin_a},
                                         {"widened", res.widened}});
  run.write_table("sweep", sweep_table(res.sweep));
  run.out() << "critical angle (n=" << params.n() << "): " << fmt6(res.alpha_crit * kDeg) << " deg at b=" << fmt6(res.argmin_a) << "\n";
}

void cmd_shrinkers(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto cfg = base_config(o);
  const auto recs = find_shrinkers(o.kmax, params, cfg);
  run.config() = {{"kmax", o.kmax}, {"integrator", config_json(cfg)}};
  Table t{{"k", "a_k", "lambda_k", "alpha_k", "bracket_width", "crossings", "tag_lo", "tag_hi"}, {}};
  for (const auto& r : recs) {
    t.rows.push_back({long(r.k), r.a_k, r.lambda_k, r.alpha_k, r.bracket_width, long(r.crossings), to_string(r.tag_lo), to_string(r.tag_hi)});
  }
  run.write_table("shrinkers", t);
  if (params.p() >= 2 && params.n() >= 4 && params.n() <= 7 && recs.size() >= 2) {
    const auto dc = decay_constants(params.n());
    const auto rep = verify_shrinker_sequence(recs, params, dc);
    run.write_json("sequence.json", {{"k", rep.k},
                                     {"a_ratio", rep.a_ratio},
                                     {"gap_ratio", rep.gap_ratio},
                                     {"a_ratio_dev", rep.a_ratio_dev},
                                     {"gap_ratio_dev", rep.gap_ratio_dev},
                                     {"phase", rep.phase},
                                     {"alternating", rep.alternating},
                                     {"expected_a_ratio", rep.expected_a_ratio},
                                     {"expected_gap_ratio", rep.expected_gap_ratio}});
  }
  run.out() << "shrinkers: found " << recs.size() << " of " << o.kmax << "\n";
  for (const auto& r : recs) {
    run.out() << "  k=" << r.k << " a=" << fmt6(r.a_k) << " alpha=" << fmt6(r.alpha_k * kDeg) << " deg, crossings " << r.crossings << "\n";
  }
}

void cmd_continuations(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  double alpha = 0.0;
  if (o.alpha_deg) {
    alpha = *o.alpha_deg / kDeg;
  } else if (o.k) {
    const auto recs = find_shrinkers(*o.k, params, IntegratorConfig{});
    if (static_cast<int>(recs.size()) < *o.k) throw NumericalError("continuations: shrinker not found");
    alpha = recs[*o.k - 1].alpha_k;
  } else {
    throw DomainError("continuations needs --k or --alpha-deg");
  }
  IntegratorConfig cfg = base_config(o);
  if (!o.rmax) cfg.r_max = 10.0;
  cfg.max_ds = 0.2;
  const double lo = o.amin.value_or(1e-8), hi = o.amax.value_or(10.0);
  const int per = o.per_decade.value_or(400);
  const auto curve = alpha_curve(log_grid(lo, hi, per), params, cfg, o.threads);
  const auto res = count_continuations(alpha, curve, params, cfg);
  run.config() = {{"alpha", alpha}, {"amin", lo}, {"amax", hi}, {"per_decade", per}, {"integrator", config_json(cfg)}};
  run.write_table("continuations", sweep_table(res.records));
  run.write_json("continuations.json", {{"alpha", alpha}, {"alpha_deg", alpha * kDeg}, {"L", res.L}, {"lower_bound", res.lower_bound}});
  run.out() << "continuations at alpha=" << fmt6(alpha * kDeg) << " deg: L=" << res.L << (res.lower_bound ? " (lower bound)" : "") << "\n";
}

void cmd_triple_junction(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto cfg = base_config(o);
  const auto res = triple_junction(params, cfg);
  run.config() = {{"integrator", config_json(cfg)}};
  run.write_json("triple_junction.json", {{"params", params_json(params)},
                                          {"a_star", res.a_star},
                                          {"b", res.b},
                                          {"crossing_angle", res.crossing_angle},
                                          {"crossing_angle_deg", res.crossing_angle * kDeg},
                                          {"angles", res.angles},
                                          {"cylinder_angle_deg", res.cylinder_angle * kDeg},
                                          {"sphere_angle_deg", res.sphere_angle * kDeg}});
  run.out() << "triple junction: a*=" << fmt6(res.a_star) << ", crossing " << fmt6(res.crossing_angle * kDeg) << " deg\n";
}

void cmd_constants(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto dc = decay_constants(params.n());
  const auto spec = fixed_point_linearization(params);
  json j = {{"params", params_json(params)},
            {"beta", dc.beta},
            {"mu", dc.mu},
            {"tau", dc.tau},
            {"sigma", dc.sigma},
            {"eigenvalues", {{spec.lambda_plus.real(), spec.lambda_plus.imag()}, {spec.lambda_minus.real(), spec.lambda_minus.imag()}}}};
  const auto cfg = base_config(o);
  run.config() = {{"integrator", config_json(cfg)}};
  if (params.p() >= 2) {
    const auto mc = matching_constants(params, cfg);
    j["matching"] = {{"A", {mc.A1, mc.A2}},
                     {"lambda", {mc.lambda1, mc.lambda2}},
                     {"B", {mc.B1, mc.B2}},
                     {"B_wronskian", {mc.B1_wronskian, mc.B2_wronskian}},
                     {"D_components", {mc.D1, mc.D2}},
                     {"D", mc.D},
                     {"E", mc.E},
                     {"companion_fit_window", {mc.companion_fit.window.first, mc.companion_fit.window.second}},
                     {"companion_fit_rms", mc.companion_fit.residual_rms}};
    run.out() << "matching constants: D=" << fmt6(mc.D) << " E=" << fmt6(mc.E) << "\n";
  }
  run.write_json("constants.json", j);
  run.out() << "n=" << params.n() << ": beta=" << fmt6(dc.beta) << " mu=" << fmt6(dc.mu) << " tau=" << fmt6(dc.tau) << "\n";
}

void cmd_fit(const Options& o, Run& run) {
  if (o.input.empty()) throw DomainError("fit needs --input <csv with columns r,w>");
  if (!o.n) throw DomainError("fit needs --n");
  if (o.fit_window.size() != 2) throw DomainError("fit needs --window LO HI");
  std::ifstream is(o.input);
  if (!is) throw IoError("cannot read " + o.input);
  std::string line;
  std::getline(is, line);
  if (line.rfind("r,w", 0) != 0) throw DomainError("fit: input header must start with r,w");
  std::vector<double> r, w;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DomainError("fit: malformed row '" + line + "'");
    r.push_back(std::stod(line.substr(0, comma)));
    w.push_back(std::stod(line.substr(comma + 1)));
  }
  const auto dc = decay_constants(*o.n);
  const auto fit = fit_oscillation(r, w, dc, {o.fit_window[0], o.fit_window[1]});
  run.config() = {{"n", *o.n}, {"input", o.input}, {"window", o.fit_window}};
  run.write_json("fit.json", {{"A1", fit.A1}, {"A2", fit.A2}, {"amplitude", fit.amplitude()},
                              {"window", {fit.window.first, fit.window.second}}, {"residual_rms", fit.residual_rms}});
  run.out() << "fit: A=(" << fmt6(fit.A1) << ", " << fmt6(fit.A2) << "), rms " << fmt6(fit.residual_rms) << "\n";
}

void cmd_evolve(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto fs = flow_setup(o, params);
  const auto sc = scheme_from(o);
  const auto tr = run_flow(fs.init, fs.t_end, params, sc, fs.t0);
  run.config() = {{"preset", o.preset}, {"h", o.h}, {"boundary", o.boundary}, {"kernel", o.kernel}, {"dt_safety", sc.dt_safety}};
  run.adopt(write_trajectory_archive(tr, run.dir() / "trajectory"));
  auto j = flow_json(tr, fs);
  j["preset"] = o.preset;
  j["params"] = params_json(params);
  run.write_json("evolve.json", j);
  run.out() << "evolve " << o.preset << ": " << j["stop"].get<std::string>() << " at t=" << fmt6(tr.states.back().t);
  if (tr.singular_time) run.out() << ", singular time " << fmt6(*tr.singular_time);
  run.out() << " (" << tr.steps.size() << " steps, " << tr.kernel << ")\n";
}

void cmd_audit(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto fs = flow_setup(o, params);
  MovingReference ref;
  if (o.reference == "companion") {
    IntegratorConfig cfg;
    cfg.r_max = o.rmax.value_or(10.0);
    ref.kind = MovingReference::Kind::StaticMinimal;
    ref.profile = companion(params, cfg).curve;
  } else if (o.reference == "shrinker") {
    const auto recs = find_shrinkers(1, params, IntegratorConfig{});
    if (recs.empty()) throw NumericalError("audit: N^1 not found");
    ref.kind = MovingReference::Kind::RescaledShrinker;
    ref.profile = shrinker_profile(recs[0], params, IntegratorConfig{});
  } else {
    throw DomainError("--reference must be companion or shrinker");
  }
  auto sc = scheme_from(o);
  const auto tr = run_flow(fs.init, fs.t_end, params, sc, fs.t0);
  const auto rep = intersection_audit(tr, ref);
  run.config() = {{"preset", o.preset}, {"reference", o.reference}, {"h", o.h}};
  Table t{{"t", "count", "interpolated"}, {}};
  for (std::size_t i = 0; i < rep.times.size(); ++i) t.rows.push_back({rep.times[i], long(rep.counts[i]), long(rep.interpolated[i])});
  run.write_table("audit", t);
  json ev = json::array();
  for (const auto& e : rep.events) ev.push_back({{"t", e.t}, {"what", e.what}});
  run.write_json("audit_summary.json", {{"nonincreasing", rep.nonincreasing}, {"events", ev}});
  run.out() << "intersection audit: " << (rep.nonincreasing ? "nonincreasing" : "INCREASE detected") << " over " << rep.times.size()
            << " snapshots\n";
}

HeatKernelSpec spec_from(const Options& o, double default_t0) {
  HeatKernelSpec s;
  s.x0_r = o.x0r;
  s.x0_u = o.x0u;
  s.t0 = o.t0.value_or(default_t0);
  s.diffusion = o.diffusion;
  return s;
}

void cmd_density(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Axial, FlowParams::axial(3));
  run.set_params(params);
  const int n = params.n();
  auto spec = spec_from(o, 0.0);
  spec.n = n;
  const std::vector<double> times{-1.0, -0.75, -0.5, -0.25};
  double expected = 0.0;
  Table t{{"t", "phi", "err"}, {}};
  double dev = 0.0;
  for (double tt : times) {
    const double tau = spec.t0 - tt;
    if (!(tau > 0)) throw DomainError("density: --t0 must exceed the sample times");
    double phi = 0.0, err = 0.0;
    if (o.preset == "plane") {
      expected = 1.0;
      phi = hyperplane_density(spec, tt, std::hypot(o.x0r, o.x0u));
    } else if (o.preset == "sphere") {
      const double m = n - 1;
      expected = std::pow(m / (2 * kPi * std::exp(1.0)), m / 2) * unit_sphere_area(n - 1);
      const auto d = gaussian_density(sphere_profile(std::sqrt(2 * m * tau), params), params, spec, tt);
      phi = d.phi;
      err = d.tail_bound;
    } else if (o.preset == "cylinder") {
      const int kq = params.q() - 1;
      expected = std::pow(kq / (2 * kPi * std::exp(1.0)), kq / 2.0) * unit_sphere_area(kq);
      const double R = std::sqrt(2 * kq * tau);
      const double L = std::sqrt(tau) * 20 + 5 * R;
      const auto d = gaussian_density(cylinder_profile(R, L, params, 2000), params, spec, tt);
      phi = d.phi;
      err = d.tail_bound;
    } else {
      throw DomainError("density --preset must be plane, sphere or cylinder");
    }
    dev = std::max(dev, std::abs(phi - expected));
    t.rows.push_back({tt, phi, err});
  }
  run.config() = {{"preset", o.preset}, {"t0", spec.t0}, {"x0", {o.x0r, o.x0u}}, {"diffusion", o.diffusion}};
  run.write_table("density", t);
  run.write_json("density_summary.json", {{"preset", o.preset}, {"n", n}, {"expected", expected}, {"max_deviation", dev}});
  run.out() << "density " << o.preset << " (n=" << n << "): expected " << fmt6(expected) << ", max deviation " << fmt6(dev) << "\n";
}

void cmd_density_trace(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  const auto fs = flow_setup(o, params);
  const double t0_default = fs.extinction ? *fs.extinction : (fs.mode == ScalingMode::Shrink ? 0.0 : fs.t_end + 1.0);
  auto spec = spec_from(o, t0_default);
  auto sc = scheme_from(o);
  const auto tr = run_flow(fs.init, std::min(fs.t_end, spec.t0 - 1e-3 * (spec.t0 - fs.t0)), params, sc, fs.t0);
  const auto dt = density_trace(tr, params, spec);
  run.config() = {{"preset", o.preset}, {"t0", spec.t0}, {"x0", {o.x0r, o.x0u}}, {"h", o.h}};
  Table t{{"t", "phi", "err"}, {}};
  for (const auto& s : dt.samples) t.rows.push_back({s.t, s.phi, s.err});
  // The trace schema is fixed: always CSV.
  std::string text = "t,phi,err\n";
  for (const auto& s : dt.samples) text += fmt17(s.t) + "," + fmt17(s.phi) + "," + fmt17(s.err) + "\n";
  run.write_text("density_trace.csv", text);
  run.write_json("density_trace.json", {{"max_upward_violation", dt.max_upward_violation},
                                        {"first_phi", dt.samples.front().phi},
                                        {"last_phi", dt.samples.back().phi},
                                        {"samples", dt.samples.size()}});
  run.out() << "density trace " << o.preset << ": phi " << fmt6(dt.samples.front().phi) << " -> " << fmt6(dt.samples.back().phi)
            << ", largest increase " << fmt6(dt.max_upward_violation) << "\n";
}

void cmd_kernel_check(const Options& o, Run& run) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> N;
  std::uniform_int_distribution<int> dim(2, 8);
  std::uniform_real_distribution<double> tau_dist(0.05, 3.0);
  double worst = 0.0;
  for (int it = 0; it < o.draws; ++it) {
    const int n = dim(rng);
    std::vector<double> x(n);
    for (auto& v : x) v = N(rng);
    std::vector<std::vector<double>> frame;
    while (static_cast<int>(frame.size()) < n - 1) {
      std::vector<double> e(n);
      for (auto& v : e) v = N(rng);
      for (const auto& f : frame) {
        double d = 0.0;
        for (int i = 0; i < n; ++i) d += e[i] * f[i];
        for (int i = 0; i < n; ++i) e[i] -= d * f[i];
      }
      double norm = 0.0;
      for (double v : e) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-8) continue;
      for (auto& v : e) v /= norm;
      frame.push_back(e);
    }
    HeatKernelSpec spec;
    spec.n = n;
    spec.x0_r = o.x0r;
    spec.x0_u = o.x0u;
    spec.diffusion = o.diffusion;
    const double tau = tau_dist(rng);
    const double t = spec.t0 - tau;
    const double res = kernel_identity_residual(x, t, frame, spec);
    // Local scale: rho times the size of the individual terms.
    double y2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = i == 0 ? spec.x0_r : (i == 1 ? spec.x0_u : 0.0);
      y2 += (x[i] - c) * (x[i] - c);
    }
    const double scale = heat_kernel(x, t, spec) * ((n - 1) / tau + y2 / (tau * tau));
    if (scale > 0) worst = std::max(worst, std::abs(res) / scale);
  }
  run.config() = {{"draws", o.draws}, {"seed", o.seed}, {"diffusion", o.diffusion}};
  run.write_json("kernel_check.json", {{"draws", o.draws}, {"diffusion", o.diffusion}, {"max_relative_residual", worst}});
  run.out() << "kernel identity: max relative residual " << fmt6(worst) << " over " << o.draws << " draws\n";
}

void cmd_first_variation(const Options& o, Run& run) {
  const auto params = resolve_params(o, ParamDefault::Balanced, FlowParams(2, 2));
  run.set_params(params);
  Functional fn;
  if (o.functional == "J") fn = Functional::J;
  else if (o.functional == "K") fn = Functional::K;
  else throw DomainError("--functional must be J or K");
  ProfileCurve curve;
  NormalPerturbation dir;
  std::optional<double> window = o.window;
  if (o.source == "shrinker") {
    const int k = o.k.value_or(1);
    const auto recs = find_shrinkers(k, params, IntegratorConfig{});
    if (static_cast<int>(recs.size()) < k) throw NumericalError("first-variation: shrinker not found");
    curve = shrinker_profile(recs[k - 1], params, IntegratorConfig{});
    const double L = curve.back().s;
    dir = NormalPerturbation::bump(0.4 * L, 0.3 * L);
  } else if (o.source == "expander") {
    IntegratorConfig cfg = base_config(o);
    cfg.r_max = o.rmax.value_or(6.0);
    curve = integrate_profile(EquationKind::Expander, series_start(EquationKind::Expander, o.a.value_or(1.0), params), params, cfg);
    const double L = curve.back().s;
    dir = NormalPerturbation::bump(0.3 * L, 0.2 * L);
    if (!window) window = cfg.r_max - 1.0;
  } else if (o.source == "sphere") {
    curve = sphere_profile(o.R.value_or(std::sqrt(2.0 * (params.n() - 1))), params);
    dir = NormalPerturbation::uniform();
  } else {
    throw DomainError("--source must be shrinker, expander or sphere");
  }
  const double h = o.step.value_or(1e-2);
  const auto fv = first_variation(curve, fn, dir, h, window);
  run.config() = {{"functional", o.functional}, {"source", o.source}, {"step", h}, {"window", window ? num(*window) : json(nullptr)}};
  run.write_json("first_variation.json", {{"fd", fv.fd},
                                          {"analytic", fv.analytic},
                                          {"scale", fv.scale},
                                          {"relative", fv.relative},
                                          {"richardson_order", num(fv.richardson_order)},
                                          {"steps", fv.steps},
                                          {"values", fv.values}});
  run.out() << "first variation of " << o.functional << " (" << o.source << "): fd " << fmt6(fv.fd) << ", analytic " << fmt6(fv.analytic)
            << ", relative " << fmt6(fv.relative) << ", order " << fmt6(fv.richardson_order) << "\n";
}

json gb_json(const GaussBonnetReport& r) {
  return {{"epsilon", r.epsilon},         {"lhs", r.lhs},
          {"H2_integral", r.H2_integral}, {"genus_term", r.genus_term},
          {"area_term", r.area_term},     {"D_ratio", r.D_ratio},
          {"genus", r.genus},             {"holds", r.holds},
          {"D_partial", r.D_partial},     {"cutoff_lhs", r.cutoff_lhs},
          {"cutoff_rhs", r.cutoff_rhs},   {"cutoff_holds", r.cutoff_holds},
          {"stated_constant", r.stated_constant}, {"cutoff_constant", r.cutoff_constant}};
}

void cmd_gauss_bonnet(const Options& o, Run& run) {
  const FlowParams params(1, 2);
  run.set_params(params);
  ProfileCurve curve;
  int genus = 0;
  if (o.preset == "sphere") {
    curve = sphere_profile(o.R.value_or(0.5), params, 2000);
  } else if (o.preset == "catenoid") {
    curve = catenoid_profile(o.R.value_or(0.5), o.rmax.value_or(2.5));
  } else if (o.preset == "torus") {
    curve = torus_profile(1.0, o.R.value_or(0.5));
    genus = 1;
  } else {
    throw DomainError("gauss-bonnet --preset must be sphere, catenoid or torus");
  }
  genus = o.genus.value_or(genus);
  std::vector<GaussBonnetReport> reps;
  if (o.eps) reps.push_back(gauss_bonnet_audit(curve, params, genus, *o.eps));
  else reps = gauss_bonnet_sweep(curve, params, genus);
  json arr = json::array();
  bool all = true;
  for (const auto& r : reps) {
    arr.push_back(gb_json(r));
    all = all && r.holds && r.cutoff_holds;
  }
  run.config() = {{"preset", o.preset}, {"genus", genus}};
  run.write_json("gauss_bonnet.json", arr);
  run.out() << "gauss-bonnet " << o.preset << ": " << (all ? "holds" : "FAILS") << " for " << reps.size() << " epsilon value(s)\n";
}

void cmd_total_curvature(const Options& o, Run& run) {
  std::vector<std::vector<SpacePoint>> comps;
  auto ellipse = [](double a, double b, double z, int n) {
    std::vector<SpacePoint> pts;
    for (int i = 0; i < n; ++i) {
      const double ph = 2 * kPi * i / n;
      pts.push_back({a * std::cos(ph), b * std::sin(ph), z});
    }
    return pts;
  };
  if (!o.input.empty()) {
    std::ifstream is(o.input);
    if (!is) throw IoError("cannot read " + o.input);
    std::string line;
    std::getline(is, line);
    if (line.rfind("component,x,y,z", 0) != 0) throw DomainError("total-curvature: header must be component,x,y,z");
    std::map<long, std::vector<SpacePoint>> byc;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string f[4];
      for (auto& s : f) std::getline(ls, s, ',');
      byc[std::stol(f[0])].push_back({std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    }
    for (auto& [c, pts] : byc) comps.push_back(std::move(pts));
  } else if (o.preset == "circle") {
    comps.push_back(ellipse(o.R.value_or(1.0), o.R.value_or(1.0), 0.0, 2000));
  } else if (o.preset == "ellipse") {
    comps.push_back(ellipse(2.0, 1.0, 0.0, 2000));
  } else if (o.preset == "two-circles") {
    comps.push_back(ellipse(1.0, 1.0, 0.0, 2000));
    comps.push_back(ellipse(0.5, 0.5, 3.0, 2000));
  } else {
    throw DomainError("total-curvature needs --input or --preset circle|ellipse|two-circles");
  }
  const auto tc = total_curvature(comps);
  run.config() = {{"preset", o.preset}, {"input", o.input}};
  run.write_json("total_curvature.json", {{"integral", tc.integral},
                                          {"components", tc.components},
                                          {"bound", 2 * kPi * tc.components},
                                          {"bound_holds", tc.bound_holds}});
  run.out() << "total curvature " << fmt6(tc.integral) << " over " << tc.components << " component(s)\n";
}

// ---------------------------------------------------------------- verify

int verify_manifest(const fs::path& manifest, std::ostream& out, std::ostream& err) {
  json m;
  try {
    m = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    err << "error: " << manifest.string() << " is not valid JSON: " << e.what() << "\n";
    return kIo;
  }
  const fs::path dir = manifest.parent_path();
  int drift = 0;
  for (const auto& o : m.at("outputs")) {
    const std::string name = o.at("path");
    const fs::path path = dir / name;
    if (!fs::exists(path)) {
      out << "missing " << name << "\n";
      ++drift;
      continue;
    }
    const auto now = sha256_file(path);
    if (now != o.at("sha256").get<std::string>()) {
      out << "drift   " << name << "\n";
      ++drift;
    }
  }
  out << (drift ? "verify: " + std::to_string(drift) + " file(s) differ\n" : "verify: all outputs match\n");
  return drift ? kNumerical : kOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--p", o.p, "dimension of the first factor");
  sub->add_option("--q", o.q, "dimension of the second factor");
  sub->add_option("--n", o.n, "ambient dimension");
  sub->add_flag("--axis", o.axis, "with --n: rotation about one axis (p = 1)");
  sub->add_option("--rmax", o.rmax, "integration radius");
  sub->add_option("--tol", o.tol, "relative integration tolerance");
  sub->add_option("--out", o.out, "output directory (default $SELFSIM_OUT or ./selfsim_out)");
  sub->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--threads", o.threads, "sweep parallelism")->check(CLI::PositiveNumber);
}

void add_flow(CLI::App* sub, Options& o) {
  sub->add_option("--preset", o.preset, "sphere, cylinder, expander or shrinker")->required();
  sub->add_option("--R", o.R, "radius for sphere and cylinder");
  sub->add_option("--a", o.a, "expander height u(0)");
  sub->add_option("--k", o.k, "shrinker index");
  sub->add_option("--t-end", o.t_end, "final time");
  sub->add_option("--spacing", o.h, "marker spacing");
  sub->add_option("--boundary", o.boundary, "extrapolate or ray");
  sub->add_option("--kernel", o.kernel, "auto, scalar or avx2");
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_file(path)); }

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Numerical experiments on self-similar solutions of mean curvature flow", "selfsim"};
  app.require_subcommand(0, 1);
  std::string verify;
  app.add_option("--verify", verify, "recompute the checksums listed in a manifest");

  Options o;
  std::map<std::string, Handler> handlers;
  auto sub = [&](const std::string& name, const std::string& help, Handler h) {
    auto* s = app.add_subcommand(name, help);
    add_common(s, o);
    handlers[name] = std::move(h);
    return s;
  };

  sub("companion", "minimal profile from u(0) = a and its phase-plane spiral", cmd_companion)->add_option("--a", o.a, "u(0)");
  sub("expander", "limiting slope of one expander", cmd_expander)->add_option("--a", o.a, "u(0)");
  {
    auto* s = sub("alpha-curve", "expander slope sweep and its extrema", cmd_alpha_curve);
    s->add_option("--amin", o.amin);
    s->add_option("--amax", o.amax);
    s->add_option("--per-decade", o.per_decade);
  }
  sub("critical-angle", "smallest limiting angle of the one-sheeted expanders", cmd_critical_angle);
  sub("shrinkers", "shrinker family N^1..N^kmax", cmd_shrinkers)->add_option("--kmax", o.kmax)->check(CLI::PositiveNumber);
  {
    auto* s = sub("continuations", "expanders sharing a shrinker's asymptotic cone", cmd_continuations);
    s->add_option("--k", o.k, "shrinker index");
    s->add_option("--alpha-deg", o.alpha_deg, "cone angle in degrees");
    s->add_option("--amin", o.amin);
    s->add_option("--amax", o.amax);
    s->add_option("--per-decade", o.per_decade);
  }
  sub("triple-junction", "shrinker meeting the diagonal at 120 degrees", cmd_triple_junction);
  sub("constants", "decay constants and matching constants", cmd_constants);
  {
    auto* s = sub("fit", "two-mode log-periodic fit of a sampled tail", cmd_fit);
    s->add_option("--input", o.input, "CSV with columns r,w")->required();
    s->add_option("--window", o.fit_window, "fit window LO HI")->expected(2);
  }
  add_flow(sub("evolve", "front-tracking mean curvature flow of a preset", cmd_evolve), o);
  {
    auto* s = sub("audit-intersections", "intersection counts of a flow against a reference", cmd_audit);
    add_flow(s, o);
    s->add_option("--reference", o.reference, "companion or shrinker");
  }
  {
    auto* s = sub("density", "Gaussian density of exact self-similar solutions", cmd_density);
    s->add_option("--preset", o.preset, "plane, sphere or cylinder")->required();
    s->add_option("--t0", o.t0);
    s->add_option("--x0r", o.x0r);
    s->add_option("--x0u", o.x0u);
    s->add_option("--diffusion", o.diffusion);
  }
  {
    auto* s = sub("density-trace", "Gaussian density along an evolved flow", cmd_density_trace);
    add_flow(s, o);
    s->add_option("--t0", o.t0);
    s->add_option("--x0r", o.x0r);
    s->add_option("--x0u", o.x0u);
    s->add_option("--diffusion", o.diffusion);
  }
  {
    auto* s = sub("kernel-check", "randomized check of the heat kernel identity", cmd_kernel_check);
    s->add_option("--draws", o.draws)->check(CLI::PositiveNumber);
    s->add_option("--seed", o.seed);
    s->add_option("--diffusion", o.diffusion);
    s->add_option("--x0r", o.x0r);
    s->add_option("--x0u", o.x0u);
  }
  {
    auto* s = sub("first-variation", "finite-difference first variation of J or K", cmd_first_variation);
    s->add_option("--functional", o.functional, "J or K");
    s->add_option("--source", o.source, "shrinker, expander or sphere");
    s->add_option("--k", o.k);
    s->add_option("--a", o.a);
    s->add_option("--R", o.R);
    s->add_option("--step", o.step, "largest finite-difference step");
    s->add_option("--window", o.window, "ball radius for K");
  }
  {
    auto* s = sub("gauss-bonnet", "local |A|^2 estimate on test surfaces", cmd_gauss_bonnet);
    s->add_option("--preset", o.preset, "sphere, catenoid or torus")->required();
    s->add_option("--R", o.R, "sphere radius, catenoid neck or torus tube radius");
    s->add_option("--eps", o.eps);
    s->add_option("--genus", o.genus);
  }
  {
    auto* s = sub("total-curvature", "total curvature of closed space polygons", cmd_total_curvature);
    s->add_option("--preset", o.preset, "circle, ellipse or two-circles");
    s->add_option("--input", o.input, "CSV with columns component,x,y,z");
    s->add_option("--R", o.R);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (!verify.empty()) return verify_manifest(verify, out, err);
    const auto subs = app.get_subcommands();
    if (subs.empty()) {
      err << "error: a subcommand is required (see --help)\n";
      return kUsage;
    }
    const std::string name = subs.front()->get_name();
    fs::path dir = o.out;
    if (dir.empty()) {
      const char* env = std::getenv("SELFSIM_OUT");
      dir = env && *env ? fs::path(env) : fs::path("selfsim_out");
    }
    std::vector<std::string> args(argv + 1, argv + argc);
    Run run(name, args, dir / name, o.format, out);
    handlers.at(name)(o, run);
    run.finish();
    return kOk;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace selfsim::cli
