#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "difflik/benchmarks.hpp"
#include "difflik/errors.hpp"
#include "difflik/expansion.hpp"
#include "difflik/ito.hpp"
#include "difflik/likelihood.hpp"
#include "difflik/model.hpp"
#include "difflik/parallel.hpp"

#ifndef DIFFLIK_VERSION
#define DIFFLIK_VERSION "0.0.0"
#endif

namespace difflik::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// --- failure context ---------------------------------------------------------------------

// Stages left by an exception in flight, innermost first.
thread_local std::vector<std::string> g_trace;

class Stage {
 public:
  explicit Stage(std::string what) : what_(std::move(what)), uncaught_(std::uncaught_exceptions()) {}
  ~Stage() {
    if (std::uncaught_exceptions() > uncaught_) g_trace.push_back(what_);
  }
  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;

 private:
  std::string what_;
  int uncaught_;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

// --- small parsers -----------------------------------------------------------------------

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_number(const std::string& raw, const std::string& what) {
  const std::string s = trimmed(raw);
  char* end = nullptr;
  const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || std::isnan(v)) {
    throw InvalidArgument("invalid number '" + raw + "' in " + what);
  }
  return v;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number(item, what));
  return out;
}

std::vector<int> parse_orders(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_numbers(text, "--orders")) {
    if (v != std::floor(v) || v < 0 || v > kMaxOrder) {
      throw InvalidArgument("orders must be integers in 0.." + std::to_string(kMaxOrder));
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string param_list(const ModelSpec& model) {
  std::string s;
  for (const auto& p : model.params) s += (s.empty() ? "" : ", ") + p;
  return s;
}

/// Either positional values in declaration order or name=value pairs.
ParameterValues parse_theta(const ModelSpec& model, const std::string& text, const std::string& what) {
  ParameterValues out;
  const auto items = split(text, ',');
  if (text.find('=') != std::string::npos) {
    for (const auto& item : items) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidArgument(what + ": expected name=value, got '" + item + "'");
      const std::string name = trimmed(item.substr(0, eq));
      if (std::find(model.params.begin(), model.params.end(), name) == model.params.end()) {
        throw InvalidArgument(what + ": unknown parameter '" + name + "' (model has " + param_list(model) + ")");
      }
      out[name] = parse_number(item.substr(eq + 1), what);
    }
    for (const auto& p : model.params) {
      if (!out.contains(p)) throw InvalidArgument(what + ": missing parameter '" + p + "'");
    }
    return out;
  }
  if (items.size() != model.params.size()) {
    throw InvalidArgument(what + ": expected " + std::to_string(model.params.size()) + " values (" +
                          param_list(model) + "), got " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) out[model.params[i]] = parse_number(items[i], what);
  return out;
}

ParameterValues resolve_theta(const ModelSpec& model, const std::string& theta, const std::string& preset) {
  if (!theta.empty()) return parse_theta(model, theta, "--theta");
  const std::string name = preset.empty() ? "benchmark" : preset;
  auto it = model.presets.find(name);
  if (it == model.presets.end()) {
    throw InvalidArgument(preset.empty() ? "model '" + model.name + "' has no default preset; give --theta"
                                         : "model '" + model.name + "' has no preset '" + name + "'");
  }
  return it->second;
}

/// "lo,hi,lo,hi,..." in parameter order, or "name=lo:hi,...".
std::map<std::string, Interval> parse_box(const ModelSpec& model, const std::string& text) {
  std::map<std::string, Interval> box;
  if (text.empty()) return box;
  if (text.find('=') != std::string::npos) {
    for (const auto& item : split(text, ',')) {
      const auto eq = item.find('=');
      const auto colon = item.find(':', eq == std::string::npos ? 0 : eq);
      if (eq == std::string::npos || colon == std::string::npos) {
        throw InvalidArgument("--box: expected name=lo:hi, got '" + item + "'");
      }
      const std::string name = trimmed(item.substr(0, eq));
      if (std::find(model.params.begin(), model.params.end(), name) == model.params.end()) {
        throw InvalidArgument("--box: unknown parameter '" + name + "'");
      }
      box[name] = {parse_number(item.substr(eq + 1, colon - eq - 1), "--box"),
                   parse_number(item.substr(colon + 1), "--box")};
    }
  } else {
    const auto v = parse_numbers(text, "--box");
    if (v.size() != 2 * model.params.size()) {
      throw InvalidArgument("--box: expected " + std::to_string(2 * model.params.size()) +
                            " values (a lower and upper bound per parameter)");
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) box[model.params[i]] = {v[2 * i], v[2 * i + 1]};
  }
  for (const auto& [name, iv] : box) {
    if (!(iv.lo < iv.hi)) throw InvalidArgument("--box: empty interval for '" + name + "'");
  }
  return box;
}

std::vector<double> resolve_x0(const ModelSpec& model, const std::string& text) {
  const auto x0 = parse_numbers(text, "--x0");
  if (x0.size() != model.m) {
    throw InvalidArgument("--x0: expected " + std::to_string(model.m) + " values, got " + std::to_string(x0.size()));
  }
  if (!model.in_state_space(x0)) throw InvalidArgument("--x0 lies outside the state space");
  return x0;
}

// --- output plumbing -----------------------------------------------------------------------

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write '" + p.string() + "'");
  out << content;
  out.close();
  if (!out) throw InvalidArgument("failed writing '" + p.string() + "'");
}

/// Writes to a temporary sibling first so readers never see a partial file.
void write_file_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  write_file(tmp, content);
  fs::rename(tmp, p);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Run {
  std::vector<std::string> args;  // canonical: path values absolute, no --threads/--force
  bool force = false;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started = utc_now();
  json inputs = json::object();
  json config = json::object();
  json outputs = json::object();

  void input(const std::string& role, const fs::path& p) {
    inputs[role] = {{"path", p.string()}, {"fnv1a64", fnv1a(read_file(p))}};
  }
  void output(const std::string& role, const fs::path& file, const std::string& content) {
    outputs[role] = {{"file", file.filename().string()}, {"fnv1a64", fnv1a(content)}};
  }
  json manifest() const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return json{{"tool", "difflik"},         {"version", DIFFLIK_VERSION}, {"args", args},
                {"threads", thread_count()}, {"started", started},         {"wall_seconds", wall},
                {"inputs", inputs},          {"config", config},           {"outputs", outputs}};
  }
};

fs::path manifest_path_for(const fs::path& out) {
  fs::path m = out;
  m += ".manifest.json";
  return m;
}

/// Sends a single result to --out (with a manifest next to it) or to stdout.
void emit_single(Run& run, const std::string& out, const std::string& role, const std::string& content,
                 const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  if (out.empty()) {
    std::cout << content;
    return;
  }
  const fs::path path(out);
  if (!path.parent_path().empty() && !fs::is_directory(path.parent_path())) {
    throw InvalidArgument("output directory '" + path.parent_path().string() + "' does not exist");
  }
  run.output(role, path, content);
  write_file_atomic(path, content);
  for (const auto& [suffix, text] : extra) {
    fs::path p = path;
    p += suffix;
    run.output(suffix.substr(1, suffix.find('.', 1) - 1), p, text);
    write_file_atomic(p, text);
  }
  write_file_atomic(manifest_path_for(path), run.manifest().dump(2) + "\n");
}

/// Collects files in a temporary directory and moves it into place at the end.
class OutputDir {
 public:
  OutputDir(const std::string& out, bool force) : final_(out) {
    if (out.empty()) throw InvalidArgument("--out is required");
    if (fs::exists(final_) && !force) {
      throw InvalidArgument("output '" + final_.string() + "' exists; pass --force to replace it");
    }
    if (!final_.parent_path().empty() && !fs::is_directory(final_.parent_path())) {
      throw InvalidArgument("parent directory of '" + final_.string() + "' does not exist");
    }
    tmp_ = final_;
    tmp_ += ".tmp";
    fs::remove_all(tmp_);
    fs::create_directory(tmp_);
  }
  ~OutputDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  void write(Run& run, const std::string& role, const std::string& name, const std::string& content) {
    run.output(role, name, content);
    write_file(tmp_ / name, content);
  }
  void commit(const Run& run) {
    write_file(tmp_ / "manifest.json", run.manifest().dump(2) + "\n");
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

json theta_json(const ModelSpec& model, const ParameterValues& theta) {
  json o = json::object();
  for (const auto& p : model.params) o[p] = theta.at(p);
  return o;
}

std::string monomial(const Exponents& e, const std::string& var) {
  std::string s;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] == 0) continue;
    if (!s.empty()) s += "*";
    s += var + std::to_string(i + 1);
    if (e[i] > 1) s += "^" + std::to_string(e[i]);
  }
  return s.empty() ? "1" : s;
}

json poly_json(const RealPoly& p, const std::string& var) {
  json o = json::object();
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) o[monomial(it->first, var)] = it->second;
  return o;
}

json matrix_json(const Eigen::MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(a.cols()));
    for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(j)] = a(i, j);
    rows.push_back(r);
  }
  return rows;
}

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// --- subcommands ---------------------------------------------------------------------------

struct ExpandArgs {
  std::string model, theta, preset, x0, out;
  int order = 2;
  bool lamperti = false;
  bool emit_grid = false;
  double delta = 1.0 / 52;
  std::size_t points = 101;
  double width = 4.0;
};

int cmd_expand(Run& run, const ExpandArgs& a) {
  Stage stage("expand");
  const ModelSpec model = load_model(a.model);
  run.input("model", a.model);
  const ParameterValues theta = resolve_theta(model, a.theta, a.preset);
  if (auto bad = model.violation(theta)) throw InvalidArgument("parameters violate '" + *bad + "'");
  const std::vector<double> x0 = resolve_x0(model, a.x0);
  if (a.order < 0 || a.order > kMaxOrder) throw InvalidArgument("--order must be in 0.." + std::to_string(kMaxOrder));
  if (a.emit_grid && a.out.empty()) throw InvalidArgument("--emit-grid needs --out");
  if (!(a.delta > 0.0)) throw InvalidArgument("--delta must be positive");
  if (a.points < 2) throw InvalidArgument("--points must be at least 2");
  run.config = {{"model", model.name}, {"theta", theta_json(model, theta)}, {"x0", x0},      {"order", a.order},
                {"lamperti", a.lamperti},  {"delta", a.delta},                  {"points", a.points}, {"width", a.width}};

  std::optional<LampertiExpansion> lamp;
  std::optional<DensityExpansion> direct;
  if (a.lamperti) {
    if (model.m != 1) throw InvalidArgument("--lamperti needs a one-dimensional model");
    Stage s("building the Lamperti expansion");
    lamp.emplace(lamperti_wrap(model, theta, x0[0], a.order));
  } else {
    Stage s("building the expansion");
    direct.emplace(expand(model, theta, x0, a.order));
  }
  const DensityExpansion& e = a.lamperti ? lamp->z_expansion() : *direct;
  const ExpansionContext& ctx = e.context();

  json doc{{"model", model.name},
           {"theta", theta_json(model, theta)},
           {"x0", x0},
           {"order", a.order},
           {"lamperti", a.lamperti}};
  if (a.lamperti) doc["z0"] = ctx.x0();
  doc["D"] = std::vector<double>(ctx.D().data(), ctx.D().data() + ctx.D().size());
  doc["Sigma"] = matrix_json(ctx.Sigma());
  json omega = json::array();
  for (const auto& t : e.terms()) omega.push_back({{"k", t.k}, {"q", poly_json(t.q, "y")}});
  doc["omega"] = omega;
  const std::string text = doc.dump(2) + "\n";

  std::vector<std::pair<std::string, std::string>> extra;
  if (a.emit_grid) {
    Stage s("evaluating the density grid");
    // Same standardized window in every dimension: +- width sd of y.
    const std::size_t m = model.m;
    std::vector<double> lo(m), step(m);
    const double root = std::sqrt(a.delta);
    double x_scale = 0.0;
    if (a.lamperti) {
      std::vector<double> xv(x0);
      x_scale = std::abs(eval(model.sigma[0][0], xv, theta));
    }
    for (std::size_t i = 0; i < m; ++i) {
      const auto I = static_cast<Eigen::Index>(i);
      const double half = a.width * root * (a.lamperti ? x_scale : std::sqrt(ctx.Sigma()(I, I)) / ctx.D()(I));
      lo[i] = x0[i] - half;
      step[i] = 2.0 * half / static_cast<double>(a.points - 1);
    }
    std::ostringstream csv;
    for (std::size_t i = 0; i < m; ++i) csv << "x" << i + 1 << ',';
    csv << "density,log_density\n";
    std::vector<std::size_t> idx(m, 0);
    std::vector<double> x(m);
    for (bool more = true; more;) {
      for (std::size_t i = 0; i < m; ++i) x[i] = lo[i] + step[i] * static_cast<double>(idx[i]);
      if (model.in_state_space(x)) {
        const double p = a.lamperti ? lamp->evaluate(a.delta, x[0]) : direct->evaluate(a.delta, x);
        double lp = -std::numeric_limits<double>::infinity();
        try {
          lp = a.lamperti ? lamp->log_density(a.delta, x[0]) : direct->log_density(a.delta, x);
        } catch (const DomainError&) {
        }
        for (double v : x) csv << csv_number(v) << ',';
        csv << csv_number(p) << ',' << (std::isfinite(lp) ? csv_number(lp) : "nan") << '\n';
      }
      std::size_t d = m;
      more = false;
      while (d-- > 0) {
        if (++idx[d] < a.points) {
          more = true;
          break;
        }
        idx[d] = 0;
      }
    }
    extra.emplace_back(".grid.csv", csv.str());
  }
  emit_single(run, a.out, "result", text, extra);
  return kOk;
}

struct FitArgs {
  std::string model, data, start, box, out;
  int order = 2;
  bool lamperti = false;
  int restarts = 0;
  double xtol = 1e-8, ftol = 1e-10;
  int max_iterations = 10000;
  bool no_se = false;
};

int cmd_fit(Run& run, const FitArgs& a) {
  Stage stage("fit");
  const ModelSpec model = load_model(a.model);
  run.input("model", a.model);
  ObservationSeries series;
  {
    Stage s("reading the data file");
    series = read_series_csv(fs::path(a.data));
  }
  run.input("data", a.data);
  series.validate(model);
  if (a.order < 0 || a.order > kMaxOrder) throw InvalidArgument("--order must be in 0.." + std::to_string(kMaxOrder));
  const ParameterValues start = parse_theta(model, a.start, "--start");
  FitOptions opt;
  opt.xtol = a.xtol;
  opt.ftol = a.ftol;
  opt.max_iterations = a.max_iterations;
  opt.restarts = a.restarts;
  opt.standard_errors = !a.no_se;
  opt.box = parse_box(model, a.box);
  json box = json::object();
  for (const auto& [k, iv] : opt.box) box[k] = {iv.lo, iv.hi};
  run.config = {{"model", model.name},
                {"order", a.order},
                {"lamperti", a.lamperti},
                {"start", theta_json(model, start)},
                {"box", box},
                {"restarts", a.restarts},
                {"xtol", a.xtol},
                {"ftol", a.ftol},
                {"max_iterations", a.max_iterations}};

  const std::vector<double> s0 = model.unbind(start);
  EstimateReport r;
  {
    Stage s("maximizing the approximate likelihood");
    r = fit(model, series, a.order, s0, opt, a.lamperti);
  }
  json doc{{"model", model.name},
           {"order", a.order},
           {"lamperti", a.lamperti},
           {"observations", series.n() + 1},
           {"delta", series.delta},
           {"status", to_string(r.status)},
           {"converged", r.converged()},
           {"loglik", r.loglik},
           {"theta", json::object()},
           {"standard_errors", nullptr},
           {"iterations", r.iterations},
           {"evaluations", r.evaluations},
           {"restarts", r.restarts},
           {"warnings", r.warnings}};
  for (std::size_t i = 0; i < r.names.size(); ++i) doc["theta"][r.names[i]] = r.theta[i];
  if (r.standard_errors) {
    json se = json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i) se[r.names[i]] = (*r.standard_errors)[i];
    doc["standard_errors"] = se;
  }
  for (const auto& w : r.warnings) std::cerr << "difflik: warning: " << one_line(w) << '\n';
  emit_single(run, a.out, "result", doc.dump(2) + "\n");
  return kOk;
}

struct SimulateArgs {
  std::string kind, model, theta, preset, x0, out;
  double delta = 1.0 / 52;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::size_t substeps = 64;
};

int cmd_simulate(Run& run, const SimulateArgs& a) {
  Stage stage("simulate");
  if (a.kind.empty() == a.model.empty()) throw InvalidArgument("give exactly one of --kind and --model");
  if (!(a.delta > 0.0)) throw InvalidArgument("--delta must be positive");
  if (a.n < 1) throw InvalidArgument("--n must be at least 1");
  ObservationSeries s;
  if (!a.kind.empty()) {
    const BenchmarkKind kind = parse_kind(a.kind);
    const ModelSpec model = benchmark_model(kind);
    const ParameterValues theta = resolve_theta(model, a.theta, a.preset);
    check_benchmark_parameters(kind, theta);
    const std::vector<double> x0 = a.x0.empty() ? default_x0(kind, theta) : resolve_x0(model, a.x0);
    run.config = {{"kind", to_string(kind)}, {"theta", theta_json(model, theta)}, {"x0", x0}, {"delta", a.delta},
                  {"n", a.n},                {"seed", a.seed},                    {"stream", a.stream}, {"scheme", "exact"}};
    s = simulate(kind, theta, a.delta, a.n, x0, a.seed, a.stream);
  } else {
    const ModelSpec model = load_model(a.model);
    run.input("model", a.model);
    const ParameterValues theta = resolve_theta(model, a.theta, a.preset);
    if (auto bad = model.violation(theta)) throw InvalidArgument("parameters violate '" + *bad + "'");
    if (a.x0.empty()) throw InvalidArgument("--x0 is required with --model");
    if (a.substeps < 1) throw InvalidArgument("--substeps must be at least 1");
    const std::vector<double> x0 = resolve_x0(model, a.x0);
    run.config = {{"model", model.name}, {"theta", theta_json(model, theta)}, {"x0", x0},
                  {"delta", a.delta},    {"n", a.n},                           {"seed", a.seed},
                  {"stream", a.stream},  {"scheme", "euler"},                  {"substeps", a.substeps}};
    s = euler_simulate(model, theta, a.delta, a.n, a.substeps, x0, a.seed, a.stream);
  }
  std::ostringstream csv;
  write_series_csv(csv, s);
  emit_single(run, a.out, "series", csv.str());
  return kOk;
}

struct BenchArgs {
  std::string kind, preset = "benchmark", theta, x0, out, orders, deltas;
  bool emit_grid = false;
  bool no_lamperti = false;
  std::size_t points = 201;
  double width = 4.0;
  // mle
  bool full_n = false;
  std::size_t replications = 500;
  std::size_t n = 1000;
  double delta = 1.0 / 52;
  std::uint64_t seed = 20240101;
};

struct BenchSetup {
  BenchmarkKind kind;
  ModelSpec model;
  ParameterValues theta;
  std::optional<std::vector<double>> x0;
};

BenchSetup bench_setup(const BenchArgs& a) {
  const BenchmarkKind kind = parse_kind(a.kind);
  ModelSpec model = benchmark_model(kind);
  ParameterValues theta = a.theta.empty() ? benchmark_preset(kind, a.preset) : parse_theta(model, a.theta, "--theta");
  check_benchmark_parameters(kind, theta);
  std::optional<std::vector<double>> x0;
  if (!a.x0.empty()) x0 = resolve_x0(model, a.x0);
  return {kind, std::move(model), std::move(theta), std::move(x0)};
}

int cmd_bench_density(Run& run, const BenchArgs& a) {
  Stage stage("bench density");
  const BenchSetup b = bench_setup(a);
  ErrorExperimentConfig cfg;
  cfg.kind = b.kind;
  cfg.theta = b.theta;
  if (!a.deltas.empty()) cfg.deltas = parse_numbers(a.deltas, "--deltas");
  if (!a.orders.empty()) cfg.orders = parse_orders(a.orders);
  cfg.lamperti = !a.no_lamperti;
  cfg.x0 = b.x0;
  cfg.points = a.points;
  cfg.width = a.width;
  for (double d : cfg.deltas) {
    if (!(d > 0.0)) throw InvalidArgument("--deltas must be positive");
  }
  OutputDir dir(a.out, run.force);
  run.config = {{"kind", to_string(b.kind)},
                {"theta", theta_json(b.model, b.theta)},
                {"x0", cfg.x0.value_or(default_x0(b.kind, b.theta))},
                {"deltas", cfg.deltas},
                {"orders", cfg.orders},
                {"lamperti", cfg.lamperti},
                {"points", cfg.points},
                {"width", cfg.width}};
  std::vector<ErrorGrid> grids;
  {
    Stage s("running the density-error experiment");
    grids = error_experiment(cfg);
  }
  std::ostringstream summary;
  write_error_summary_csv(summary, grids);
  dir.write(run, "summary", "error_summary.csv", summary.str());
  if (a.emit_grid) {
    std::ostringstream points;
    write_error_points_csv(points, grids);
    dir.write(run, "grid", "error_points.csv", points.str());
  }
  dir.commit(run);
  return kOk;
}

int cmd_bench_mle(Run& run, const BenchArgs& a) {
  Stage stage("bench mle");
  const BenchSetup b = bench_setup(a);
  MleExperimentConfig cfg;
  cfg.kind = b.kind;
  cfg.theta = b.theta;
  cfg.delta = a.delta;
  cfg.n = a.n;
  cfg.replications = a.full_n ? 5000 : a.replications;
  if (!a.orders.empty()) cfg.orders = parse_orders(a.orders);
  cfg.seed = a.seed;
  cfg.x0 = b.x0;
  if (!(cfg.delta > 0.0)) throw InvalidArgument("--delta must be positive");
  if (cfg.n < 3) throw InvalidArgument("--n must be at least 3");
  if (cfg.replications < 1) throw InvalidArgument("--replications must be at least 1");
  OutputDir dir(a.out, run.force);
  run.config = {{"kind", to_string(b.kind)},
                {"theta", theta_json(b.model, b.theta)},
                {"x0", cfg.x0.value_or(default_x0(b.kind, b.theta))},
                {"delta", cfg.delta},
                {"n", cfg.n},
                {"replications", cfg.replications},
                {"orders", cfg.orders},
                {"seed", cfg.seed}};
  MleExperimentResult r;
  {
    Stage s("running the estimation experiment");
    r = mle_experiment(cfg);
  }
  run.config["replications_used"] = r.used;
  run.config["failures"] = r.failures;
  std::ostringstream table, estimates;
  write_mle_table_csv(table, r);
  write_mle_estimates_csv(estimates, r);
  dir.write(run, "table", "mle_table.csv", table.str());
  dir.write(run, "estimates", "mle_estimates.csv", estimates.str());
  dir.commit(run);
  return kOk;
}

struct PolyArgs {
  std::vector<std::string> indices;
  std::size_t dims = 1;
  std::string out;
};

int cmd_poly(Run& run, const PolyArgs& a) {
  Stage stage("poly");
  if (a.dims < 1 || a.dims > 9) throw InvalidArgument("--dims must be in 1..9");
  std::vector<MultiIndex> factors;
  json listed = json::array();
  for (const auto& text : a.indices) {
    std::vector<int> entries;
    for (double v : parse_numbers(text, "--index")) {
      if (v != std::floor(v) || v < 0 || v > static_cast<double>(a.dims)) {
        throw InvalidArgument("--index entries must be integers in 0.." + std::to_string(a.dims));
      }
      entries.push_back(static_cast<int>(v));
    }
    factors.emplace_back(std::span<const int>(entries));
    listed.push_back(entries);
  }
  run.config = {{"indices", listed}, {"dims", a.dims}};
  const RationalPoly p = conditional_product_expectation(factors, a.dims);
  emit_single(run, a.out, "result", p.to_string("z") + "\n");
  return kOk;
}

// --- dispatch ------------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& raw);

struct ReplayArgs {
  std::string manifest, out;
  bool check = false;
  bool force = false;
};

int cmd_replay(const ReplayArgs& a) {
  const fs::path mpath = fs::absolute(a.manifest);
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    throw InvalidArgument("'" + mpath.string() + "' is not a manifest: " + e.what());
  }
  if (!m.contains("args") || !m["args"].is_array() || !m.contains("outputs")) {
    throw InvalidArgument("'" + mpath.string() + "' is not a manifest");
  }
  std::vector<std::string> args = m["args"].get<std::vector<std::string>>();
  if (args.empty() || args[0] == "replay") throw InvalidArgument("manifest records no replayable command");
  auto it = std::find(args.begin(), args.end(), "--out");
  if (it == args.end() || it + 1 == args.end()) throw InvalidArgument("manifest records no --out");
  const bool is_dir = mpath.filename() == "manifest.json";
  fs::path target;
  if (!a.out.empty()) {
    target = fs::absolute(a.out);
  } else {
    const fs::path orig(*(it + 1));
    target = is_dir ? fs::path(orig.string() + "-replay")
                    : orig.parent_path() / (orig.stem().string() + "-replay" + orig.extension().string());
  }
  *(it + 1) = target.string();
  if (a.force) args.push_back("--force");
  if (m.contains("threads") && m["threads"].is_number_unsigned()) {
    args.push_back("--threads");
    args.push_back(std::to_string(m["threads"].get<std::size_t>()));
  }
  const int code = dispatch(args);
  if (code != kOk || !a.check) return code;

  const fs::path fresh = is_dir ? target / "manifest.json" : manifest_path_for(target);
  const json n = json::parse(read_file(fresh));
  std::size_t same = 0;
  for (const auto& [role, entry] : m["outputs"].items()) {
    if (!n["outputs"].contains(role) || n["outputs"][role]["fnv1a64"] != entry["fnv1a64"]) {
      std::cerr << "difflik: replay output '" << role << "' differs from the recorded run\n";
      return kInternalError;
    }
    ++same;
  }
  std::cout << "replay: " << same << " output(s) identical\n";
  return kOk;
}

/// Splits --opt=value, makes path values absolute and drops options that do
/// not affect results.
std::vector<std::string> canonical(const std::vector<std::string>& raw, bool& force) {
  static const std::vector<std::string> paths{"--model", "--data", "--out"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string a = raw[i];
    std::optional<std::string> value;
    if (a.rfind("--", 0) == 0) {
      const auto eq = a.find('=');
      if (eq != std::string::npos) {
        value = a.substr(eq + 1);
        a = a.substr(0, eq);
      }
    }
    if (a == "--force") {
      force = true;
      continue;
    }
    if (a == "--threads") {
      if (!value && i + 1 < raw.size()) ++i;
      continue;
    }
    if (std::find(paths.begin(), paths.end(), a) != paths.end()) {
      if (!value && i + 1 < raw.size()) value = raw[++i];
      out.push_back(a);
      if (value) out.push_back(value->empty() ? *value : fs::absolute(*value).lexically_normal().string());
      continue;
    }
    out.push_back(a);
    if (value) out.push_back(*value);
  }
  return out;
}

int dispatch(const std::vector<std::string>& raw) {
  CLI::App app{"Closed-form transition-density expansions and approximate maximum likelihood for diffusions.",
               "difflik"};
  app.set_version_flag("--version", DIFFLIK_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(
      "Exit codes: 0 success, 1 user error (bad arguments or input files), 2 internal error.\n"
      "DIFFLIK_THREADS sets the default worker count.");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: DIFFLIK_THREADS or all cores)");
  bool force = false;
  app.add_flag("--force", force, "Replace an existing output");

  ExpandArgs ea;
  auto* expand_cmd = app.add_subcommand("expand", "Print the correction polynomials q_k of the density expansion");
  expand_cmd->add_option("--model", ea.model, "Model file (TOML)")->required()->check(CLI::ExistingFile);
  expand_cmd->add_option("--theta", ea.theta, "Parameters: v1,v2,... or name=value,...");
  expand_cmd->add_option("--preset", ea.preset, "Named preset from the model file");
  expand_cmd->add_option("--x0", ea.x0, "Starting state x1,...,xm")->required();
  expand_cmd->add_option("--order", ea.order, "Expansion order J")->capture_default_str();
  expand_cmd->add_flag("--lamperti", ea.lamperti, "Expand the Lamperti-transformed process (1-D)");
  expand_cmd->add_option("--out", ea.out, "JSON output file (default: stdout)");
  expand_cmd->add_flag("--emit-grid", ea.emit_grid, "Also write the density on a grid to <out>.grid.csv");
  expand_cmd->add_option("--delta", ea.delta, "Time step for the grid")->capture_default_str();
  expand_cmd->add_option("--points", ea.points, "Grid points per dimension")->capture_default_str();
  expand_cmd->add_option("--width", ea.width, "Grid half-width in conditional standard deviations")
      ->capture_default_str();

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Approximate maximum-likelihood estimate from an observed path");
  fit_cmd->add_option("--model", fa.model, "Model file (TOML)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--data", fa.data, "CSV with header t,x1,...,xm")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--order", fa.order, "Expansion order J")->capture_default_str();
  fit_cmd->add_option("--start", fa.start, "Starting parameters: v1,v2,... or name=value,...")->required();
  fit_cmd->add_option("--box", fa.box, "Search box: lo1,hi1,lo2,hi2,... or name=lo:hi,...");
  fit_cmd->add_flag("--lamperti", fa.lamperti, "Use the Lamperti-transformed expansion (1-D)");
  fit_cmd->add_option("--restarts", fa.restarts, "Simplex restarts from the best point")->capture_default_str();
  fit_cmd->add_option("--xtol", fa.xtol, "Simplex size tolerance")->capture_default_str();
  fit_cmd->add_option("--ftol", fa.ftol, "Objective spread tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fa.max_iterations, "Iteration limit")->capture_default_str();
  fit_cmd->add_flag("--no-se", fa.no_se, "Skip the observed-information standard errors");
  fit_cmd->add_option("--out", fa.out, "JSON output file (default: stdout)");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a path (exact law for benchmark kinds, Euler otherwise)");
  sim_cmd->add_option("--kind", sa.kind, "Benchmark kind: mrou, sqr or dmrou");
  sim_cmd->add_option("--model", sa.model, "Model file for Euler simulation")->check(CLI::ExistingFile);
  sim_cmd->add_option("--theta", sa.theta, "Parameters: v1,v2,... or name=value,...");
  sim_cmd->add_option("--preset", sa.preset, "Named preset (default: benchmark)");
  sim_cmd->add_option("--x0", sa.x0, "Starting state (default for kinds: the long-run mean)");
  sim_cmd->add_option("--delta", sa.delta, "Sampling interval")->capture_default_str();
  sim_cmd->add_option("--n", sa.n, "Number of transitions")->capture_default_str();
  sim_cmd->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--stream", sa.stream, "Random stream")->capture_default_str();
  sim_cmd->add_option("--substeps", sa.substeps, "Euler steps per observation")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "CSV output file (default: stdout)");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Reference experiments on the benchmark models");
  bench_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--kind", ba.kind, "mrou, sqr or dmrou")->required();
    c->add_option("--preset", ba.preset, "Parameter preset")->capture_default_str();
    c->add_option("--theta", ba.theta, "Parameters overriding the preset");
    c->add_option("--x0", ba.x0, "Starting state (default: the long-run mean)");
    c->add_option("--orders", ba.orders, "Expansion orders, comma separated (default: 1,...,6)");
    c->add_option("--out", ba.out, "Output directory")->required();
  };
  auto* density_cmd = bench_cmd->add_subcommand("density", "Density approximation errors on grids");
  add_common(density_cmd);
  density_cmd->add_option("--deltas", ba.deltas, "Time steps, comma separated (default: 1/12,1/52,1/252)");
  density_cmd->add_option("--points", ba.points, "Grid points per dimension")->capture_default_str();
  density_cmd->add_option("--width", ba.width, "Grid half-width in conditional standard deviations")
      ->capture_default_str();
  density_cmd->add_flag("--no-lamperti", ba.no_lamperti, "Skip the Lamperti variant for sqr");
  density_cmd->add_flag("--emit-grid", ba.emit_grid, "Also write every grid point to error_points.csv");
  auto* mle_cmd = bench_cmd->add_subcommand("mle", "Replicated exact and approximate maximum-likelihood estimates");
  add_common(mle_cmd);
  mle_cmd->add_option("--delta", ba.delta, "Sampling interval")->capture_default_str();
  mle_cmd->add_option("--n", ba.n, "Transitions per path")->capture_default_str();
  mle_cmd->add_option("--replications", ba.replications, "Number of simulated paths")->capture_default_str();
  mle_cmd->add_flag("--full-n", ba.full_n, "Run 5000 replications");
  mle_cmd->add_option("--seed", ba.seed, "Random seed")->capture_default_str();

  PolyArgs pa;
  auto* poly_cmd = app.add_subcommand(
      "poly", "Print E[J_i1 ... J_il | W(1) = z] for iterated Stratonovich integrals as an exact polynomial");
  poly_cmd->add_option("--index", pa.indices, "Multi-index i1,...,in (repeat for a product)")->required();
  poly_cmd->add_option("--dims", pa.dims, "Brownian dimension m")->capture_default_str();
  poly_cmd->add_option("--out", pa.out, "Output file (default: stdout)");

  ReplayArgs ra;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", ra.manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", ra.out, "New output location (default: the recorded one with -replay)");
  replay_cmd->add_flag("--check", ra.check, "Compare outputs with the recorded checksums");

  std::vector<std::string> reversed(raw.rbegin(), raw.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "difflik: error: " << one_line(e.what()) << " (see --help)\n";
    return kUserError;
  }
  if (threads > 0) set_thread_count(threads);

  Run run;
  run.args = canonical(raw, run.force);
  run.force = run.force || force;
  if (*expand_cmd) return cmd_expand(run, ea);
  if (*fit_cmd) return cmd_fit(run, fa);
  if (*sim_cmd) return cmd_simulate(run, sa);
  if (*density_cmd) return cmd_bench_density(run, ba);
  if (*mle_cmd) return cmd_bench_mle(run, ba);
  if (*poly_cmd) return cmd_poly(run, pa);
  ra.force = run.force;
  return cmd_replay(ra);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  g_trace.clear();
  try {
    return dispatch(args);
  } catch (const Error& e) {
    std::cerr << "difflik: error: " << one_line(e.what()) << '\n';
    return kUserError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "difflik: error: " << one_line(e.what()) << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "difflik: internal error: " << one_line(e.what()) << '\n';
    for (const auto& s : g_trace) std::cerr << "  while: " << s << '\n';
    return kInternalError;
  } catch (...) {
    std::cerr << "difflik: internal error: unknown exception\n";
    for (const auto& s : g_trace) std::cerr << "  while: " << s << '\n';
    return kInternalError;
  }
}

}  // namespace difflik::cli
