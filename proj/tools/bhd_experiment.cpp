// bhd-experiment: config-driven sweeps over the dimer model.
//
//   bhd-experiment run CONFIG [--set key.path=value ...] [--no-cache]
//   bhd-experiment validate CONFIG [--set ...]
//   bhd-experiment cache-gc [--max-age-days D] [--dry-run]
//   bhd-experiment describe
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 solver
// non-convergence, 4 symmetry violation.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <deque>
#include <functional>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bhd/cache.hpp"
#include "bhd/perturbation.hpp"
#include "bhd/pipeline.hpp"
#include "bhd/trajectories.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace bhd;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kSchemaVersion = 1;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNoConvergence = 3, kSymmetry = 4 };

// ---------------------------------------------------------------- config

json default_config() {
  return json::parse(R"({
    "experiment": "spectrum-sweep",
    "model": {"preset": "monostable", "j": 1.1, "delta": 0.8, "u_tilde": 1.0, "gamma": 1.0,
              "dephase_rate": 0.0, "loss": "amplitude"},
    "n_list": [1],
    "f_tilde": [1.8],
    "cutoffs": {"k_b": null, "k_a": 6},
    "solver": {"method": "auto", "dense_limit": 20000, "auto_dense_max": 2000, "n_pairs": 4,
               "krylov_dim": 200, "max_restarts": 400, "tol": 1e-10, "seed": 1, "keep_pairs": 16,
               "shifts": [], "shift_pairs": 4},
    "seed": 1,
    "workers": 1,
    "output_dir": "bhd-out",
    "spectrum": {"sectors": ["eo"], "n_eigs": 6},
    "dephasing": {"rate": 0.1, "full": false, "ratio_alphas": [0.001, 0.01], "ratio_n": [1]},
    "kick": {"b": 0.5, "c0": [0.5, 0.0], "t_kick": 2.5, "delta_phi": 1.0, "t_final": 20.0,
             "sample_dt": 0.05, "mode": "master", "n_traj": 200, "wigner_times": [],
             "wigner_half_width": 4.0, "wigner_step": 0.05, "co_rotate": false},
    "convergence": {"sectors": ["eo"], "k_b_ladder": [], "tol": 1e-6}
  })");
}

const char* type_label(const json& j) {
  if (j.is_number()) return "number";
  if (j.is_boolean()) return "boolean";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool same_kind(const json& want, const json& got) {
  if (want.is_null() || got.is_null()) return true;
  if (want.is_number()) return got.is_number();
  return std::string(type_label(want)) == type_label(got);
}

// Copies `user` onto `base`, rejecting keys the defaults do not know.
void merge_checked(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (key == "f_tilde" && it->is_object()) {
      for (const auto& [k, v] : it->items()) {
        if (k != "start" && k != "stop" && k != "step") throw ConfigError("unknown key 'f_tilde." + k + "'");
        if (!v.is_number()) throw ConfigError("'f_tilde." + k + "' expects a number");
      }
      slot = *it;
      continue;
    }
    if (slot.is_object() && it->is_object()) {
      merge_checked(slot, *it, key);
      continue;
    }
    if (!same_kind(slot, *it)) {
      throw ConfigError("'" + key + "' expects " + type_label(slot) + ", got " + type_label(*it));
    }
    slot = *it;
  }
}

// --set a.b.c=value; value parsed as JSON, else taken as a string.
void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

json load_config(const std::string& file, const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config '" + file + "'");
  json user;
  try {
    in >> user;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + file + "' is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(user, o);
  json cfg = default_config();
  merge_checked(cfg, user, "");
  return cfg;
}

struct Settings {
  std::string experiment;
  ModelParams model;
  std::vector<int> n_list;
  std::vector<double> f_grid;
  std::optional<int> k_b;
  int k_a = kAntibondingCutoff;
  SolverSettings solver;
  int workers = 1;
  std::uint64_t seed = 1;
  fs::path output_dir;
  json raw;
};

const std::set<std::string> kExperiments = {"spectrum-sweep", "ns-scaling",          "dephasing",
                                            "kick-recovery",  "semiclassical-sweep", "convergence-check"};

Settings interpret(const json& c) {
  Settings s;
  s.raw = c;
  s.experiment = c["experiment"].get<std::string>();
  if (!kExperiments.count(s.experiment)) throw ConfigError("unknown experiment '" + s.experiment + "'");

  const auto& m = c["model"];
  const std::string preset = m["preset"].get<std::string>();
  if (preset != "monostable" && preset != "custom") throw ConfigError("model.preset must be 'monostable' or 'custom'");
  s.model.j = m["j"].get<double>();
  s.model.delta = m["delta"].get<double>();
  s.model.u_tilde = m["u_tilde"].get<double>();
  s.model.gamma = m["gamma"].get<double>();
  s.model.dephase_rate = m["dephase_rate"].get<double>();
  const std::string loss = m["loss"].get<std::string>();
  if (loss == "amplitude") {
    s.model.loss = LossConvention::amplitude;
  } else if (loss == "lindblad") {
    s.model.loss = LossConvention::lindblad;
  } else {
    throw ConfigError("model.loss must be 'amplitude' or 'lindblad'");
  }
  if (s.model.gamma < 0.0 || s.model.dephase_rate < 0.0) throw ConfigError("rates must be non-negative");

  for (const auto& n : c["n_list"]) {
    if (!n.is_number_integer() || n.get<int>() < 1) throw ConfigError("n_list entries must be positive integers");
    s.n_list.push_back(n.get<int>());
  }
  if (s.n_list.empty()) throw ConfigError("n_list is empty");

  const auto& f = c["f_tilde"];
  if (f.is_object()) {
    if (!f.contains("start") || !f.contains("stop") || !f.contains("step")) {
      throw ConfigError("f_tilde range needs start, stop and step");
    }
    const double step = f["step"].get<double>();
    if (step <= 0.0) throw ConfigError("f_tilde.step must be positive");
    s.f_grid = linear_axis(f["start"].get<double>(), f["stop"].get<double>() + 1e-12, step);
  } else {
    for (const auto& x : f) {
      if (!x.is_number()) throw ConfigError("f_tilde entries must be numbers");
      s.f_grid.push_back(x.get<double>());
    }
  }
  if (s.f_grid.empty()) throw ConfigError("f_tilde grid is empty");

  if (!c["cutoffs"]["k_b"].is_null()) s.k_b = c["cutoffs"]["k_b"].get<int>();
  s.k_a = c["cutoffs"]["k_a"].get<int>();
  if ((s.k_b && *s.k_b < 1) || s.k_a < 1) throw ConfigError("cutoffs must be positive");
  for (int n : s.n_list) {
    if (!s.k_b && !preset_space(n)) {
      throw ConfigError("no preset cutoff for N = " + std::to_string(n) + "; set cutoffs.k_b");
    }
  }

  const auto& sv = c["solver"];
  s.solver.method = solver_method_from_name(sv["method"].get<std::string>());
  s.solver.dense_limit = sv["dense_limit"].get<int>();
  s.solver.auto_dense_max = sv["auto_dense_max"].get<int>();
  s.solver.krylov.n_pairs = sv["n_pairs"].get<int>();
  s.solver.krylov.krylov_dim = sv["krylov_dim"].get<int>();
  s.solver.krylov.max_restarts = sv["max_restarts"].get<int>();
  s.solver.krylov.tol = sv["tol"].get<double>();
  s.solver.krylov.seed = sv["seed"].get<std::uint64_t>();
  s.solver.keep_pairs = sv["keep_pairs"].get<int>();
  s.solver.shift_invert.n_pairs = sv["shift_pairs"].get<int>();
  s.solver.shift_invert.seed = s.solver.krylov.seed;
  for (const auto& z : sv["shifts"]) {
    if (!z.is_array() || z.size() != 2) throw ConfigError("solver.shifts entries must be [re, im]");
    s.solver.shift_invert.shifts.emplace_back(z[0].get<double>(), z[1].get<double>());
  }
  if (s.solver.krylov.n_pairs < 1 || s.solver.shift_invert.n_pairs < 1) throw ConfigError("pair counts must be >= 1");

  s.workers = c["workers"].get<int>();
  if (s.workers < 1) throw ConfigError("workers must be >= 1");
  s.seed = c["seed"].get<std::uint64_t>();
  s.output_dir = c["output_dir"].get<std::string>();
  return s;
}

ModelParams model_at(const Settings& s, int n, double f) {
  ModelParams p = s.model;
  p.n_scale = n;
  p.f_tilde = f;
  return p;
}

FockSpace space_for(const Settings& s, int n) { return model_space(model_at(s, n, 0.0), s.k_b, s.k_a); }

// ---------------------------------------------------------------- output

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvFile {
  std::string name;
  std::string schema;
  std::string columns;
  std::ostringstream body;
  long rows = 0;

  CsvFile(std::string n, std::string sc, std::string cols)
      : name(std::move(n)), schema(std::move(sc)), columns(std::move(cols)) {}

  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    auto put = [&](const auto& c) {
      if (!first) body << ',';
      first = false;
      using C = std::decay_t<decltype(c)>;
      if constexpr (std::is_floating_point_v<C>) {
        body << g17(c);
      } else {
        body << c;
      }
    };
    (put(cells), ...);
    body << '\n';
    ++rows;
  }
};

struct TaskRecord {
  std::string id;
  std::string status = "ok";
  std::string detail;
  json info = json::object();
};

struct Run {
  Settings cfg;
  std::unique_ptr<EigenCache> cache;
  std::deque<CsvFile> files;
  std::vector<TaskRecord> tasks;
  json fallbacks = json::array();
  json notes = json::object();
  std::mutex mu;

  CsvFile& add_file(const std::string& name, const std::string& schema, const std::string& columns) {
    for (const auto& f : files)
      if (f.name == name) throw std::logic_error("duplicate output file " + name);
    files.emplace_back(name, schema, columns);
    return files.back();
  }

  void fallback(const std::string& what) {
    std::lock_guard<std::mutex> lock(mu);
    if (std::find(fallbacks.begin(), fallbacks.end(), what) == fallbacks.end()) fallbacks.push_back(what);
  }
};

std::uint64_t config_hash(const json& c) {
  json h = c;
  h.erase("output_dir");
  h.erase("workers");
  return fnv1a64(h.dump());
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_outputs(Run& run, const std::string& started, double wall) {
  fs::create_directories(run.cfg.output_dir);
  json files = json::array();
  for (auto& f : run.files) {
    std::ofstream out(run.cfg.output_dir / f.name, std::ios::trunc);
    out << "# schema: " << f.schema << "/" << kSchemaVersion << "\n" << f.columns << "\n" << f.body.str();
    files.push_back({{"path", f.name}, {"schema", f.schema}, {"schema_version", kSchemaVersion},
                     {"columns", f.columns}, {"rows", f.rows}, {"content_hash", hex64(fnv1a64(f.body.str()))}});
  }
  json tasks = json::array();
  for (const auto& t : run.tasks) {
    json j = {{"id", t.id}, {"status", t.status}};
    if (!t.detail.empty()) j["detail"] = t.detail;
    if (!t.info.empty()) j["info"] = t.info;
    tasks.push_back(j);
  }
  json m;
  m["manifest_version"] = kSchemaVersion;
  m["tool"] = {{"name", "bhd-experiment"},
               {"version", kToolVersion},
               {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION)},
               {"compiler", __VERSION__}};
  m["experiment"] = run.cfg.experiment;
  m["config"] = run.cfg.raw;
  m["config_hash"] = hex64(config_hash(run.cfg.raw));
  m["started_utc"] = started;
  m["wall_seconds"] = wall;
  m["cache_root"] = run.cache ? run.cache->root().string() : std::string();
  m["tasks"] = tasks;
  m["files"] = files;
  m["fallbacks"] = run.fallbacks;
  if (!run.notes.empty()) m["notes"] = run.notes;
  std::ofstream(run.cfg.output_dir / "manifest.json", std::ios::trunc) << m.dump(2) << "\n";
}

// ---------------------------------------------------------------- solving

struct SolveOut {
  EigenSystem sys;
  bool hit = false;
};

SolveOut solve(Run& run, const ModelParams& p, const Superoperator& l, Sector sector, SolverSettings s) {
  const int bs = static_cast<int>(l.mask(sector).size());
  const SolverMethod m = resolve_method(s, bs);
  if (s.method == SolverMethod::dense && bs > s.dense_limit) {
    throw ConfigError("refuse dense solve: sector block " + std::to_string(bs) + " exceeds dense_limit " +
                      std::to_string(s.dense_limit));
  }
  if (s.method == SolverMethod::automatic) {
    run.fallback(std::string("solver.method auto resolved to ") + solver_method_name(m) + " for block size " +
                 std::to_string(bs));
  }
  if (m == SolverMethod::shift_invert && s.shift_invert.shifts.empty()) {
    run.fallback("shift-invert targets chosen from the mean-field frequency (solver.shifts empty)");
  }
  SolveOut out;
  out.sys = cached_solve(run.cache.get(), p, l, sector, s, &out.hit);
  return out;
}

json report_json(const EigenSystem& sys, bool hit) {
  return {{"method", method_name(sys.report.method)}, {"converged", sys.report.converged},
          {"restarts", sys.report.restarts},           {"max_residual", sys.report.max_residual},
          {"k_b", sys.report.k_b},                     {"k_a", sys.report.k_a},
          {"cache_hit", hit}};
}

// Runs task bodies on the worker pool; failures are recorded, not thrown.
template <class F>
void run_tasks(Run& run, const std::vector<std::string>& ids, F&& body) {
  const std::size_t first = run.tasks.size();
  for (const auto& id : ids) run.tasks.push_back({id});
  detail::parallel_for(static_cast<int>(ids.size()), run.cfg.workers, [&](int i) {
    TaskRecord& t = run.tasks[first + static_cast<std::size_t>(i)];
    try {
      body(i, t);
    } catch (const SymmetryViolation& e) {
      t.status = "symmetry-violation";
      t.detail = e.what();
    } catch (const ConvergenceError& e) {
      t.status = "not-converged";
      t.detail = e.what();
    } catch (const ConfigError& e) {
      t.status = "config-error";
      t.detail = e.what();
    } catch (const std::exception& e) {
      t.status = "failed";
      t.detail = e.what();
    }
  });
}

struct Combo {
  int n;
  double f;
};

std::vector<Combo> combos(const Settings& s) {
  std::vector<Combo> out;
  for (int n : s.n_list)
    for (double f : s.f_grid) out.push_back({n, f});
  return out;
}

std::string combo_id(const Combo& c) { return "n=" + std::to_string(c.n) + ",f=" + g17(c.f); }

std::vector<Sector> sectors_from(const json& arr) {
  std::vector<Sector> out;
  for (const auto& x : arr) {
    try {
      out.push_back(sector_from_name(x.get<std::string>()));
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown sector '" + x.get<std::string>() + "'");
    }
  }
  if (out.empty()) throw ConfigError("sector list is empty");
  return out;
}

EigenOperatorSet operator_set(Run& run, const ModelParams& p, const Superoperator& l, TaskRecord& t,
                              bool left = false) {
  SolverSettings s = run.cfg.solver;
  const SolveOut ee = solve(run, p, l, Sector::ee, s);
  const SolveOut oo = solve(run, p, l, Sector::oo, s);
  s.compute_left = left;
  const SolveOut eo = solve(run, p, l, Sector::eo, s);
  t.info["ee"] = report_json(ee.sys, ee.hit);
  t.info["oo"] = report_json(oo.sys, oo.hit);
  t.info["eo"] = report_json(eo.sys, eo.hit);
  return make_operator_set(p, ee.sys, oo.sys, eo.sys);
}

// ---------------------------------------------------------------- experiments

void spectrum_sweep(Run& run) {
  const auto& c = run.cfg;
  const auto sectors = sectors_from(c.raw["spectrum"]["sectors"]);
  const int n_eigs = c.raw["spectrum"]["n_eigs"].get<int>();
  const auto cs = combos(c);
  std::vector<std::string> ids;
  for (const auto& x : cs) ids.push_back(combo_id(x));
  std::vector<std::map<Sector, EigenSystem>> systems(cs.size());
  run_tasks(run, ids, [&](int i, TaskRecord& t) {
    const auto p = model_at(c, cs[i].n, cs[i].f);
    const auto l = build_liouvillian(space_for(c, cs[i].n), p);
    std::set<Sector> need(sectors.begin(), sectors.end());
    need.insert(Sector::eo);
    for (Sector s : need) {
      const SolveOut o = solve(run, p, l, s, c.solver);
      t.info[sector_name(s)] = report_json(o.sys, o.hit);
      systems[static_cast<std::size_t>(i)][s] = o.sys;
    }
  });

  auto& spec = run.add_file("spectrum.csv", "bhd.spectrum", "f_tilde,n,re_lambda,im_lambda,branch,switched");
  auto& eig = run.add_file("eigenvalues.csv", "bhd.eigenvalues", "f_tilde,n,sector,index,re_lambda,im_lambda,residual");
  std::size_t k = 0;
  for (int n : c.n_list) {
    // Branch labels restart after a failed point.
    std::vector<double> fs_seg;
    std::vector<EigenSystem> seg;
    int offset = 0;
    auto flush = [&] {
      if (seg.empty()) return;
      const auto bp = track_branches(fs_seg, seg);
      for (const auto& b : bp) spec.row(b.f_tilde, n, b.lambda.real(), b.lambda.imag(), b.branch + offset, b.switched ? 1 : 0);
      offset += bp.back().branch + 1;
      fs_seg.clear();
      seg.clear();
    };
    for (double f : c.f_grid) {
      const auto& t = run.tasks[k];
      if (t.status == "ok") {
        fs_seg.push_back(f);
        seg.push_back(systems[k].at(Sector::eo));
        for (Sector s : sectors) {
          const auto& sys = systems[k].at(s);
          for (std::size_t j = 0; j < sys.pairs.size() && static_cast<int>(j) < n_eigs; ++j)
            eig.row(f, n, sector_name(s), j, sys.pairs[j].lambda.real(), sys.pairs[j].lambda.imag(), sys.pairs[j].residual);
        }
      } else {
        flush();
      }
      ++k;
    }
    flush();
  }
}

void ns_scaling(Run& run) {
  const auto& c = run.cfg;
  const auto cs = combos(c);
  std::vector<std::string> ids;
  for (const auto& x : cs) ids.push_back(combo_id(x));
  std::vector<NSReport> common(cs.size()), bonding(cs.size());
  run_tasks(run, ids, [&](int i, TaskRecord& t) {
    const auto p = model_at(c, cs[i].n, cs[i].f);
    const auto l = build_liouvillian(space_for(c, cs[i].n), p);
    assert_sector_diagonal(l);
    const auto set = operator_set(run, p, l, t);
    common[static_cast<std::size_t>(i)] = ns_report(set);
    bonding[static_cast<std::size_t>(i)] = bonding_report(set);
    t.info["lambda_eo"] = {set.lambdas[1].real(), set.lambdas[1].imag()};
    if (common[static_cast<std::size_t>(i)].hermitian_warning) t.info["hermitian_warning"] = true;
  });
  auto& out = run.add_file("ns_distances.csv", "bhd.ns_distances", "f_tilde,n,basis,pair,distance");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (run.tasks[i].status != "ok") continue;
    for (const auto& [pair, d] : common[i].hs_distances) out.row(cs[i].f, cs[i].n, "common", pair, d);
    for (const auto& [pair, d] : bonding[i].hs_distances) out.row(cs[i].f, cs[i].n, "bonding-trace", pair, d);
  }
}

void dephasing(Run& run) {
  const auto& c = run.cfg;
  const auto& d = c.raw["dephasing"];
  const double rate = d["rate"].get<double>();
  const bool full = d["full"].get<bool>();
  if (rate < 0.0) throw ConfigError("dephasing.rate must be non-negative");
  const auto cs = combos(c);
  std::vector<std::string> ids;
  for (const auto& x : cs) ids.push_back(combo_id(x));
  std::vector<PerturbationResult> pert(cs.size());
  std::vector<NSReport> exact(cs.size());
  std::vector<cplx> exact_eo(cs.size());
  run_tasks(run, ids, [&](int i, TaskRecord& t) {
    auto p = model_at(c, cs[i].n, cs[i].f);
    p.dephase_rate = 0.0;
    const FockSpace space = space_for(c, cs[i].n);
    const auto l0 = build_liouvillian(space, p);
    SolverSettings s = c.solver;
    s.compute_left = true;
    const SolveOut eo = solve(run, p, l0, Sector::eo, s);
    t.info["eo"] = report_json(eo.sys, eo.hit);
    pert[static_cast<std::size_t>(i)] = dephasing_result(eo.sys, select_nonstationary_index(eo.sys), rate);
    if (full) {
      p.dephase_rate = rate;
      const auto l = build_liouvillian(space, p);
      assert_sector_diagonal(l);
      TaskRecord sub;
      const auto set = operator_set(run, p, l, sub);
      t.info["full"] = sub.info;
      exact[static_cast<std::size_t>(i)] = ns_report(set);
      exact_eo[static_cast<std::size_t>(i)] = set.lambdas[1];
    }
  });
  auto& out = run.add_file("dephasing_shift.csv", "bhd.dephasing_shift",
                           std::string("f_tilde,") + kDephasingColumns + ",extra_decay,frequency_shift");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (run.tasks[i].status != "ok") continue;
    const auto& r = pert[i];
    out.row(cs[i].f, cs[i].n, "eo", r.lambda0.real(), r.lambda0.imag(), r.delta_lambda.real(), r.delta_lambda.imag(),
            rate, r.extra_decay(), r.frequency_shift());
  }
  if (full) {
    auto& ns = run.add_file("dephasing_exact.csv", "bhd.dephasing_exact", "f_tilde,n,rate,re_lambda_eo,im_lambda_eo,pair,distance");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (run.tasks[i].status != "ok") continue;
      for (const auto& [pair, dist] : exact[i].hs_distances)
        ns.row(cs[i].f, cs[i].n, rate, exact_eo[i].real(), exact_eo[i].imag(), pair, dist);
    }
  }

  // Second-order ratio against exact diagonalization of L0 + a L_d.
  std::vector<Combo> rc;
  std::vector<double> alphas;
  for (const auto& a : d["ratio_alphas"]) alphas.push_back(a.get<double>());
  for (const auto& n : d["ratio_n"])
    for (double f : c.f_grid) rc.push_back({n.get<int>(), f});
  if (alphas.empty() || rc.empty()) return;
  std::vector<std::string> rids;
  for (const auto& x : rc) rids.push_back("ratio:" + combo_id(x));
  std::vector<std::vector<double>> ratios(rc.size());
  run_tasks(run, rids, [&](int i, TaskRecord&) {
    auto p = model_at(c, rc[i].n, rc[i].f);
    p.dephase_rate = 0.0;
    const FockSpace space = space_for(c, rc[i].n);
    const auto sys0 = dense_eig(extract_block(build_liouvillian(space, p), Sector::eo));
    const std::size_t j = select_nonstationary_index(sys0);
    const cplx lam0 = sys0.pairs[j].lambda;
    const cplx lam1 = dephasing_shift(space, sys0.left(j), sys0.right(j));
    for (double a : alphas) {
      p.dephase_rate = a;
      DenseOptions o;
      o.compute_vectors = false;
      const auto sys = dense_eig(extract_block(build_liouvillian(space, p), Sector::eo), o);
      const cplx guess = lam0 + a * lam1;
      cplx best = sys.pairs.front().lambda;
      for (const auto& q : sys.pairs)
        if (std::abs(q.lambda - guess) < std::abs(best - guess)) best = q.lambda;
      ratios[static_cast<std::size_t>(i)].push_back(second_order_ratio(best, lam0, lam1, a));
    }
  });
  auto& rt = run.add_file("dephasing_ratio.csv", "bhd.dephasing_ratio", "f_tilde,n,alpha,ratio");
  for (std::size_t i = 0; i < rc.size(); ++i) {
    if (run.tasks[run.tasks.size() - rc.size() + i].status != "ok") continue;
    for (std::size_t k = 0; k < alphas.size(); ++k) rt.row(rc[i].f, rc[i].n, alphas[k], ratios[i][k]);
  }
}

void kick_recovery(Run& run) {
  const auto& c = run.cfg;
  const auto& k = c.raw["kick"];
  KickConfig kc;
  kc.t_final = k["t_final"].get<double>();
  kc.sample_dt = k["sample_dt"].get<double>();
  const std::string mode = k["mode"].get<std::string>();
  if (mode == "master") {
    kc.mode = EvolutionMode::master;
  } else if (mode == "trajectory") {
    kc.mode = EvolutionMode::trajectory;
  } else {
    throw ConfigError("kick.mode must be 'master' or 'trajectory'");
  }
  kc.n_traj = k["n_traj"].get<int>();
  kc.seed = c.seed;
  kc.workers = c.workers;
  for (const auto& t : k["wigner_times"]) kc.wigner_times.push_back(t.get<double>());
  kc.wigner_half_width = k["wigner_half_width"].get<double>();
  kc.wigner_step = k["wigner_step"].get<double>();
  if (kc.sample_dt <= 0.0 || kc.t_final <= 0.0 || kc.n_traj < 1 || kc.wigner_step <= 0.0) {
    throw ConfigError("kick: t_final, sample_dt, wigner_step and n_traj must be positive");
  }
  const KickProtocol kick{k["t_kick"].get<double>(), k["delta_phi"].get<double>()};
  if (kick.t_kick < 0.0 || kick.t_kick > kc.t_final) throw ConfigError("kick.t_kick outside [0, t_final]");
  if (!k["c0"].is_array() || k["c0"].size() != 2) throw ConfigError("kick.c0 must be [re, im]");
  const cplx c0(k["c0"][0].get<double>(), k["c0"][1].get<double>());
  const double b = k["b"].get<double>();
  if (b < 0.0 || b > 1.0) throw ConfigError("kick.b must lie in [0, 1]");

  // Combos run one after another; parallelism goes to the trajectories.
  for (const auto& x : combos(c)) {
    const std::string tag = "n" + std::to_string(x.n) + "_f" + g17(x.f);
    KickResult res;
    run_tasks(run, {combo_id(x)}, [&](int, TaskRecord& t) {
      const auto p = model_at(c, x.n, x.f);
      const FockSpace space = space_for(c, x.n);
      const auto l = build_liouvillian(space, p);
      const auto set = operator_set(run, p, l, t);
      InitialStateSpec spec;
      spec.b = b;
      spec.c0 = c0;
      spec.source = &set;
      const auto init = assemble_initial(spec);
      t.info["positivity_repair"] = init.repair;
      if (init.repair > 0.0) run.fallback("initial state positivity repair applied (" + g17(init.repair) + ")");
      if (k["co_rotate"].get<bool>()) kc.rotating_frequency = set.lambdas[1].imag();
      res = kick_experiment(space, init.rho, hamiltonian_bs(space, p), jump_operators(space, p), kick, kc);
    });
    if (run.tasks.back().status != "ok") continue;
    auto& ser = run.add_file("kick_" + tag + ".csv", "bhd.kick_series",
                             std::string(kKickColumns) + ",re_ab_clean,im_ab_clean,re_ab_err,im_ab_err");
    for (const auto& s : res.series)
      ser.row(s.t, s.d_err_vs_clean, s.d_clean_vs_init, s.d_err_vs_init, s.a_b_clean.real(), s.a_b_clean.imag(),
              s.a_b_err.real(), s.a_b_err.imag());
    for (const auto& w : res.snapshots) {
      auto& f = run.add_file("wigner_" + tag + "_t" + g17(w.t) + "_" + (w.mode == Mode::B ? "B" : "A") + "_" +
                                 (w.kicked ? "kicked" : "clean") + ".csv",
                             "bhd.wigner", "x,y,w");
      for (std::size_t i = 0; i < w.grid.y.size(); ++i)
        for (std::size_t j = 0; j < w.grid.x.size(); ++j)
          f.row(w.grid.x[j], w.grid.y[i], w.grid.re(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
}

void semiclassical_sweep(Run& run) {
  const auto& c = run.cfg;
  SteadyBranch br;
  run_tasks(run, {"continuation"}, [&](int, TaskRecord& t) {
    br = continuation(model_at(c, 1, c.f_grid.front()), c.f_grid);
    t.info["jump_count"] = br.jump_count;
    if (br.jump_location) t.info["jump_location"] = *br.jump_location;
  });
  if (run.tasks.back().status != "ok") return;
  run.notes["jump_count"] = br.jump_count;
  if (br.jump_location) run.notes["jump_location"] = *br.jump_location;
  auto& out = run.add_file("semiclassical.csv", "bhd.semiclassical",
                           "f_tilde,re_alpha_b,im_alpha_b,abs_alpha_b,omega_a,unstable,converged");
  for (std::size_t i = 0; i < br.f_tilde.size(); ++i) {
    const auto w = omega_a(br.alpha_b[i], model_at(c, 1, br.f_tilde[i]));
    out.row(br.f_tilde[i], br.alpha_b[i].real(), br.alpha_b[i].imag(), std::abs(br.alpha_b[i]), w.omega,
            w.unstable ? 1 : 0, br.converged[i] ? 1 : 0);
  }
}

void convergence_check(Run& run) {
  const auto& c = run.cfg;
  const auto& cv = c.raw["convergence"];
  const auto sectors = sectors_from(cv["sectors"]);
  const double tol = cv["tol"].get<double>();
  std::vector<int> ladder;
  for (const auto& x : cv["k_b_ladder"]) ladder.push_back(x.get<int>());
  struct Job {
    Combo combo;
    Sector sector;
  };
  std::vector<Job> jobs;
  std::vector<std::string> ids;
  for (const auto& x : combos(c))
    for (Sector s : sectors) {
      jobs.push_back({x, s});
      ids.push_back(combo_id(x) + ",sector=" + sector_name(s));
    }
  std::vector<ConvergenceReport> reps(jobs.size());
  run_tasks(run, ids, [&](int i, TaskRecord& t) {
    const auto& j = jobs[static_cast<std::size_t>(i)];
    std::vector<int> lad = ladder;
    if (lad.empty()) {
      const int kb = space_for(c, j.combo.n).k_b();
      lad = {std::max(2, kb - 4), kb, kb + 4};
      run.fallback("convergence.k_b_ladder empty: used preset K_B - 4, K_B, K_B + 4");
    }
    reps[static_cast<std::size_t>(i)] = convergence_sweep(model_at(c, j.combo.n, j.combo.f), j.sector, lad, c.k_a, c.solver, tol);
    const auto& r = reps[static_cast<std::size_t>(i)];
    if (r.stable_from) t.info["stable_from"] = *r.stable_from;
    else t.info["stable_from"] = nullptr;
  });
  auto& out = run.add_file("convergence.csv", "bhd.convergence",
                           "f_tilde,n,sector,k_b,k_a,re_lambda,im_lambda,change,stable,converged,method");
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (run.tasks[i].status != "ok") continue;
    for (const auto& st : reps[i].steps)
      out.row(jobs[i].combo.f, jobs[i].combo.n, sector_name(jobs[i].sector), st.k_b, st.k_a, st.lambda.real(),
              st.lambda.imag(), st.change, st.stable ? 1 : 0, st.report.converged ? 1 : 0, method_name(st.report.method));
  }
}

// ---------------------------------------------------------------- verbs

struct Diagnostics {
  std::vector<std::string> errors, warnings, info;
};

Diagnostics diagnose(const Settings& s) {
  Diagnostics d;
  for (int n : s.n_list) {
    const auto preset = preset_space(n);
    if (s.k_b && preset && *s.k_b != preset->k_b()) {
      d.warnings.push_back("N=" + std::to_string(n) + ": cutoffs.k_b=" + std::to_string(*s.k_b) +
                           " differs from the preset K_B=" + std::to_string(preset->k_b()));
    }
    if (preset && s.k_a != kAntibondingCutoff) {
      d.warnings.push_back("N=" + std::to_string(n) + ": cutoffs.k_a=" + std::to_string(s.k_a) +
                           " differs from the preset K_A=" + std::to_string(kAntibondingCutoff));
    }
    const FockSpace sp = space_for(s, n);
    const long dim = sp.dim();
    const long vec = dim * dim;
    // Sector sizes are exact for even K_A; this is the largest block.
    const long block = static_cast<long>(sector_masks(sp)[0].size());
    const double dense_gib = 16.0 * static_cast<double>(block) * static_cast<double>(block) / (1 << 30);
    const double krylov_mib = 16.0 * static_cast<double>(block) * (s.solver.krylov.effective_dim(static_cast<int>(block)) + 1) / (1 << 20);
    std::ostringstream os;
    os << "N=" << n << ": K_B=" << sp.k_b() << " K_A=" << sp.k_a() << " dim=" << dim << " vectorized dimension "
       << vec << " sector block " << block << "; dense block " << std::setprecision(3) << dense_gib
       << " GiB, Krylov basis " << krylov_mib << " MiB";
    d.info.push_back(os.str());
    const SolverMethod m = resolve_method(s.solver, static_cast<int>(block));
    if (m == SolverMethod::dense && block > s.solver.dense_limit) {
      d.errors.push_back("refuse dense solve at N=" + std::to_string(n) + ": superoperator dim^2 = " +
                         std::to_string(vec) + " (sector block " + std::to_string(block) + " > dense_limit " +
                         std::to_string(s.solver.dense_limit) + ")");
    } else {
      d.info.push_back(std::string("N=") + std::to_string(n) + ": solver " + solver_method_name(m));
    }
  }
  return d;
}

int with_exit_codes(const std::function<int()>& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const SymmetryViolation& e) {
    std::cerr << "symmetry violation: " << e.what() << "\n";
    return kSymmetry;
  } catch (const ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int cmd_validate(const std::string& file, const std::vector<std::string>& sets) {
  const Settings s = interpret(load_config(file, sets));
  const Diagnostics d = diagnose(s);
  std::cout << "experiment " << s.experiment << ", " << s.n_list.size() << " N value(s), " << s.f_grid.size()
            << " drive value(s)\n";
  for (const auto& x : d.info) std::cout << "info: " << x << "\n";
  for (const auto& x : d.warnings) std::cout << "warning: " << x << "\n";
  for (const auto& x : d.errors) std::cout << "error: " << x << "\n";
  return d.errors.empty() ? kOk : kConfig;
}

int cmd_run(const std::string& file, const std::vector<std::string>& sets, bool no_cache) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Run run;
  run.cfg = interpret(load_config(file, sets));
  const Diagnostics d = diagnose(run.cfg);
  for (const auto& x : d.warnings) std::cerr << "warning: " << x << "\n";
  if (!d.errors.empty()) {
    for (const auto& x : d.errors) std::cerr << "config error: " << x << "\n";
    return kConfig;
  }
  if (!no_cache) run.cache = std::make_unique<EigenCache>(default_cache_root());

  const std::string& e = run.cfg.experiment;
  if (e == "spectrum-sweep") spectrum_sweep(run);
  else if (e == "ns-scaling") ns_scaling(run);
  else if (e == "dephasing") dephasing(run);
  else if (e == "kick-recovery") kick_recovery(run);
  else if (e == "semiclassical-sweep") semiclassical_sweep(run);
  else convergence_check(run);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_outputs(run, started, wall);

  int code = kOk;
  for (const auto& t : run.tasks) {
    if (t.status == "ok") continue;
    std::cerr << "task " << t.id << ": " << t.status << ": " << t.detail << "\n";
    const int c = t.status == "symmetry-violation" ? kSymmetry
                  : t.status == "not-converged"    ? kNoConvergence
                  : t.status == "config-error"     ? kConfig
                                                   : kFailure;
    if (code == kOk || c == kSymmetry || (c == kNoConvergence && code != kSymmetry)) code = c;
  }
  std::cout << "wrote " << run.files.size() << " data file(s) and manifest.json to " << run.cfg.output_dir.string()
            << "\n";
  return code;
}

int cmd_cache_gc(double max_age_days, bool dry_run) {
  EigenCache cache(default_cache_root());
  const auto age = std::chrono::seconds(static_cast<long long>(max_age_days * 86400.0));
  const auto r = cache.gc(age, dry_run);
  std::cout << (dry_run ? "would remove " : "removed ") << r.removed << " entr" << (r.removed == 1 ? "y" : "ies")
            << " (" << r.bytes_removed << " bytes), kept " << r.kept << " in " << cache.root().string() << "\n";
  return kOk;
}

int cmd_describe() {
  const ModelParams p = monostable_preset();
  std::cout << "Model preset 'monostable': J=" << p.j << " Delta=" << p.delta << " U~=" << p.u_tilde << " gamma=" << p.gamma
            << " loss=" << loss_convention_name(p.loss) << " (Lindblad rate " << p.loss_rate() << " on a_B)\n"
            << "Scaling: F = F~ sqrt(N), U = U~ / N\n\n"
            << "Cutoff ladder\n"
            << "   N   K_B   K_A    dim   vec_dim   sector_block\n";
  for (const auto& c : kCutoffLadder) {
    const long dim = static_cast<long>(c.k_b) * kAntibondingCutoff;
    std::printf("%4d %5d %5d %6ld %9ld %14ld\n", c.n_scale, c.k_b, kAntibondingCutoff, dim, dim * dim, dim * dim / 4);
  }
  std::cout << "\nExperiments: spectrum-sweep, ns-scaling, dephasing, kick-recovery, semiclassical-sweep, "
               "convergence-check\n"
            << "Solvers: auto, dense, krylov, shift-invert\n"
            << "Cache root: $" << kCacheEnvVar << " (default .bhd-cache)\n"
            << "Exit codes: 0 ok, 1 failure, 2 config error, 3 non-convergence, 4 symmetry violation\n\n"
            << "Defaults:\n"
            << default_config().dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral experiments on the driven-dissipative Bose-Hubbard dimer"};
  app.require_subcommand(1);

  std::string file;
  std::vector<std::string> sets;
  bool no_cache = false;
  auto* run = app.add_subcommand("run", "Run the experiment named in a config file");
  run->add_option("config", file, "JSON config")->required();
  run->add_option("--set", sets, "Override a leaf: key.path=value")->take_all();
  run->add_flag("--no-cache", no_cache, "Ignore the eigen cache");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", file, "JSON config")->required();
  validate->add_option("--set", sets, "Override a leaf: key.path=value")->take_all();

  double max_age = 30.0;
  bool dry_run = false;
  auto* gc = app.add_subcommand("cache-gc", "Remove stale or incomplete cache entries");
  gc->add_option("--max-age-days", max_age, "Keep entries younger than this")->check(CLI::NonNegativeNumber);
  gc->add_flag("--dry-run", dry_run, "Only report what would be removed");

  auto* describe = app.add_subcommand("describe", "Print presets, cutoff ladder and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  if (*run) return with_exit_codes([&] { return cmd_run(file, sets, no_cache); });
  if (*validate) return with_exit_codes([&] { return cmd_validate(file, sets); });
  if (*gc) return with_exit_codes([&] { return cmd_cache_gc(max_age, dry_run); });
  if (*describe) return cmd_describe();
  return kFailure;
}
