/// @file cli.cpp
/// @brief Config parsing, CSV emission and batch commands.
#include "crossdiff/cli.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace crossdiff::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& key, const ConfigEntry& e) {
  return "line " + std::to_string(e.line) + ", key '" + key + "'";
}

double to_double(const std::string& key, const ConfigEntry& e) {
  const std::string& s = e.value;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(where(key, e) + ": expected a finite number, got '" + s + "'");
  return v;
}

int to_int(const std::string& key, const ConfigEntry& e) {
  const std::string& s = e.value;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(where(key, e) + ": expected an integer, got '" + s + "'");
  return v;
}

std::vector<double> to_list(const std::string& key, const ConfigEntry& e) {
  std::string s = e.value;
  if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, {trim(item), e.line}));
  if (out.empty()) throw ConfigError(where(key, e) + ": expected a comma-separated list");
  return out;
}

void require(bool ok, const std::string& key, const ConfigEntry& e, const std::string& what) {
  if (!ok) throw ConfigError(where(key, e) + ": " + what);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void close_checked(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

nlohmann::ordered_json meta_json(const std::string& command, const RunConfig& cfg, const Resolved& r) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["model"]["name"] = r.model.name;
  j["model"]["dim"] = r.model.dim;
  for (const auto& [name, p] : r.model.parameters) {
    j["model"]["parameters"][name] = {{"value", p.value}, {"published", p.published}};
  }
  j["grid"] = {{"lower", r.grid.origin[0]},
               {"upper", r.grid.origin[0] + r.grid.cells[0] * r.grid.h},
               {"cells", r.grid.cells[0]},
               {"h", r.grid.h}};
  j["time"] = {{"tau", r.tau}, {"steps", r.steps}};
  j["pdfb"] = {{"gamma", cfg.pdfb.gamma > 0 ? nlohmann::ordered_json(cfg.pdfb.gamma) : "auto"},
               {"gamma_bar", cfg.pdfb.gamma_bar > 0 ? nlohmann::ordered_json(cfg.pdfb.gamma_bar) : "auto"},
               {"tol", cfg.pdfb.tol},
               {"max_iter", cfg.pdfb.max_iter},
               {"projection", to_string(cfg.pdfb.projection)}};
  j["output"] = {{"every", cfg.output_every}};
  j["strict_dissipation"] = cfg.strict_dissipation;
  return j;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  close_checked(out, path);
}

std::string field_file(int step) { return "fields_" + std::to_string(step) + ".csv"; }

}  // namespace

// --- config -------------------------------------------------------------------

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::stringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    if (value.empty()) throw ConfigError("line " + std::to_string(line) + ", key '" + key + "': empty value");
    if (map.count(key))
      throw ConfigError("line " + std::to_string(line) + ", key '" + key + "': duplicate (first set on line " +
                        std::to_string(map[key].line) + ")");
    map[key] = {value, line};
  }
  return map;
}

ConfigMap parse_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig load_config(const ConfigMap& entries) {
  RunConfig c;
  for (const auto& [key, e] : entries) {
    if (key == "model.name") {
      c.model_name = e.value;
    } else if (key == "model.dim") {
      c.dim = to_int(key, e);
      require(c.dim == 1 || c.dim == 2, key, e, "dimension must be 1 or 2");
    } else if (key.rfind("model.params.", 0) == 0) {
      const std::string name = key.substr(13);
      require(!name.empty(), key, e, "missing parameter name");
      c.params[name] = to_double(key, e);
    } else if (key == "grid.lower") {
      c.lower = to_double(key, e);
    } else if (key == "grid.upper") {
      c.upper = to_double(key, e);
    } else if (key == "grid.cells") {
      c.cells = to_int(key, e);
      require(*c.cells >= 1, key, e, "need at least one cell");
    } else if (key == "time.tau") {
      c.tau = to_double(key, e);
      require(*c.tau > 0, key, e, "time step must be positive");
    } else if (key == "time.steps") {
      c.steps = to_int(key, e);
      require(*c.steps >= 0, key, e, "step count must be nonnegative");
    } else if (key == "pdfb.gamma" || key == "pdfb.gamma_bar") {
      double v = 0.0;
      if (e.value != "auto") {
        v = to_double(key, e);
        require(v > 0, key, e, "step size must be positive or 'auto'");
      }
      (key == "pdfb.gamma" ? c.pdfb.gamma : c.pdfb.gamma_bar) = v;
    } else if (key == "pdfb.tol") {
      c.pdfb.tol = to_double(key, e);
      require(c.pdfb.tol > 0, key, e, "tolerance must be positive");
    } else if (key == "pdfb.max_iter") {
      c.pdfb.max_iter = to_int(key, e);
      require(c.pdfb.max_iter >= 1, key, e, "iteration cap must be positive");
    } else if (key == "pdfb.projection") {
      try {
        c.pdfb.projection = parse_projection_method(e.value);
      } catch (const std::invalid_argument& err) {
        throw ConfigError(where(key, e) + ": " + err.what());
      }
    } else if (key == "output.dir") {
      c.output_dir = e.value;
    } else if (key == "output.every") {
      c.output_every = to_int(key, e);
      require(c.output_every >= 1, key, e, "cadence must be at least 1");
    } else if (key == "study.taus") {
      c.study_taus = to_list(key, e);
      for (double t : c.study_taus) require(t > 0, key, e, "time steps must be positive");
    } else if (key == "study.final_time") {
      c.study_final_time = to_double(key, e);
      require(c.study_final_time > 0, key, e, "final time must be positive");
    } else if (key == "reference.tau") {
      c.reference_tau = to_double(key, e);
      require(c.reference_tau > 0, key, e, "time step must be positive");
    } else if (key == "reference.final_time") {
      c.reference_final_time = to_double(key, e);
      require(c.reference_final_time >= 0, key, e, "final time must be nonnegative");
    } else if (key == "reference.every") {
      c.reference_every = to_int(key, e);
      require(c.reference_every >= 1, key, e, "cadence must be at least 1");
    } else {
      throw ConfigError(where(key, e) + ": unknown key");
    }
  }
  return c;
}

Resolved resolve(const RunConfig& c) {
  Resolved r;
  try {
    r.model = make_model(c.model_name, c.dim, c.params);
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  const double lo = c.lower.value_or(r.model.domain_lo);
  const double hi = c.upper.value_or(r.model.domain_hi);
  const int n = c.cells.value_or(r.model.cells);
  if (!(hi > lo)) throw ConfigError("grid.upper must exceed grid.lower");
  r.grid = c.dim == 1 ? Grid::line(n, lo, hi) : Grid::square(n, lo, hi);
  r.tau = c.tau.value_or(r.model.tau);
  r.steps = c.steps.value_or(r.model.steps);
  return r;
}

// --- CSV ----------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_fields_csv(const fs::path& path, const Grid& grid, int species, std::span<const double> mu) {
  const int nc = grid.num_cells();
  if (static_cast<int>(mu.size()) != species * nc) throw GeometryError("write_fields_csv: size mismatch");
  auto out = open_out(path);
  out << (grid.dim == 2 ? "x,y" : "x");
  for (int a = 0; a < species; ++a) out << ",mu_" << a + 1;
  out << '\n';
  for (int i = 0; i < nc; ++i) {
    const auto x = grid.cell_center(i);
    out << format_double(x[0]);
    if (grid.dim == 2) out << ',' << format_double(x[1]);
    for (int a = 0; a < species; ++a) out << ',' << format_double(mu[a * nc + i]);
    out << '\n';
  }
  close_checked(out, path);
}

void write_diagnostics_csv(const fs::path& path, int species, const std::vector<StepDiagnostics>& rows) {
  auto out = open_out(path);
  out << "step,time,energy";
  for (int a = 0; a < species; ++a) out << ",mass_" << a + 1;
  out << ",min_box_slack,pdfb_iters,primal_res,dual_res\n";
  for (const auto& d : rows) {
    out << d.step << ',' << format_double(d.time) << ',' << format_double(d.energy);
    for (int a = 0; a < species; ++a) out << ',' << format_double(d.mass[a]);
    out << ',' << format_double(d.min_box_slack) << ',' << d.pdfb_iterations << ','
        << format_double(d.primal_residual) << ',' << format_double(d.dual_residual) << '\n';
  }
  close_checked(out, path);
}

std::vector<double> CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] != name) continue;
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }
  throw std::out_of_range("CSV has no column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(trim(cell));
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string cell = trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (cell.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
          throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
        row.push_back(v);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != t.header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong number of columns");
    t.rows.push_back(std::move(row));
  }
  return t;
}

// --- commands -----------------------------------------------------------------

CommandResult cmd_run(const RunConfig& cfg) {
  const Resolved r = resolve(cfg);
  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  JkoConfig jc;
  jc.tau = r.tau;
  jc.steps = r.steps;
  jc.pdfb = cfg.pdfb;
  jc.output_every = cfg.output_every;
  jc.strict_dissipation = cfg.strict_dissipation;
  const auto mu0 = r.model.initial(r.grid);
  const Trajectory traj = run_flow(mu0, r.model, r.grid, jc);

  for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
    write_fields_csv(dir / field_file(traj.snapshot_steps[k]), r.grid, r.model.species, traj.snapshots[k]);
  const fs::path diag = dir / "diagnostics.csv";
  write_diagnostics_csv(diag, r.model.species, traj.diagnostics);

  auto meta = meta_json("run", cfg, r);
  meta["completed"] = traj.completed;
  if (!traj.completed) {
    meta["failed_step"] = traj.failed_step;
    meta["error"] = traj.error;
  }
  nlohmann::ordered_json warnings = nlohmann::ordered_json::array();
  for (const auto& d : traj.diagnostics)
    for (const auto& w : d.warnings) warnings.push_back("step " + std::to_string(d.step) + ": " + w);
  meta["warnings"] = warnings;
  write_json(dir / "run_meta.json", meta);

  if (!traj.completed) {
    return {ExitCode::Solver, "step " + std::to_string(traj.failed_step) + " failed: " + traj.error +
                                  " (diagnostics in " + diag.string() + ")"};
  }
  return {ExitCode::Ok, "wrote " + std::to_string(traj.snapshots.size()) + " snapshots to " + dir.string()};
}

namespace {

void require_reference_support(const ModelSpec& m) {
  if (m.name == "saturation_fp")
    throw ConfigError("the reference scheme does not support '" + m.name + "' (no positivity handling at vacuum)");
}

}  // namespace

CommandResult cmd_convergence_study(const RunConfig& cfg) {
  const Resolved r = resolve(cfg);
  require_reference_support(r.model);
  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  const auto mu0 = r.model.initial(r.grid);

  ReferenceConfig rc;
  rc.tau = cfg.reference_tau;
  const auto ref = reference_run(mu0, r.model, r.grid, cfg.study_final_time, rc);
  write_fields_csv(dir / "reference_final.csv", r.grid, r.model.species, ref);

  std::vector<double> errors;
  for (std::size_t k = 0; k < cfg.study_taus.size(); ++k) {
    JkoConfig jc;
    jc.tau = cfg.study_taus[k];
    jc.final_time = cfg.study_final_time;
    jc.pdfb = cfg.pdfb;
    jc.output_every = std::numeric_limits<int>::max();
    jc.strict_dissipation = cfg.strict_dissipation;
    const Trajectory traj = run_flow(mu0, r.model, r.grid, jc);
    if (!traj.completed) {
      return {ExitCode::Solver, "tau = " + format_double(jc.tau) + ", step " + std::to_string(traj.failed_step) +
                                    " failed: " + traj.error};
    }
    write_fields_csv(dir / ("pdfb_final_" + std::to_string(k) + ".csv"), r.grid, r.model.species,
                     traj.final_state);
    errors.push_back(relative_error(traj.final_state, ref));
  }

  const fs::path table = dir / "convergence.csv";
  auto out = open_out(table);
  const bool with_order = errors.size() > 1;
  out << (with_order ? "tau,relative_error,order\n" : "tau,relative_error\n");
  for (std::size_t k = 0; k < errors.size(); ++k) {
    out << format_double(cfg.study_taus[k]) << ',' << format_double(errors[k]);
    if (with_order) {
      out << ',';
      if (k > 0)
        out << format_double(std::log(errors[k - 1] / errors[k]) / std::log(cfg.study_taus[k - 1] / cfg.study_taus[k]));
    }
    out << '\n';
  }
  close_checked(out, table);

  auto meta = meta_json("study-convergence", cfg, r);
  meta["study"] = {{"taus", cfg.study_taus}, {"final_time", cfg.study_final_time}, {"reference_tau", cfg.reference_tau}};
  write_json(dir / "run_meta.json", meta);
  return {ExitCode::Ok, "wrote " + table.string()};
}

CommandResult cmd_reference(const RunConfig& cfg) {
  const Resolved r = resolve(cfg);
  require_reference_support(r.model);
  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  const auto mu0 = r.model.initial(r.grid);
  ReferenceConfig rc;
  rc.tau = cfg.reference_tau;

  std::vector<StepDiagnostics> diags{diagnose(r.model, r.grid, mu0, 0, 0.0)};
  write_fields_csv(dir / field_file(0), r.grid, r.model.species, mu0);
  const long steps = std::lround(std::ceil(cfg.reference_final_time / rc.tau - 1e-9));
  std::vector<double> mu = mu0;
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double dt = std::min(rc.tau, cfg.reference_final_time - t);
    ReferenceStepReport rep;
    mu = backward_euler_step(mu, r.model, r.grid, dt, rc, &rep);
    t = k == steps ? cfg.reference_final_time : t + dt;
    if (k % cfg.reference_every == 0 || k == steps) {
      auto d = diagnose(r.model, r.grid, mu, static_cast<int>(k), t);
      d.primal_residual = rep.residual;
      diags.push_back(std::move(d));
      write_fields_csv(dir / field_file(static_cast<int>(k)), r.grid, r.model.species, mu);
    }
  }
  write_diagnostics_csv(dir / "diagnostics.csv", r.model.species, diags);
  auto meta = meta_json("reference", cfg, r);
  meta["reference"] = {{"tau", rc.tau}, {"final_time", cfg.reference_final_time}, {"every", cfg.reference_every}};
  write_json(dir / "run_meta.json", meta);
  return {ExitCode::Ok, "wrote " + std::to_string(diags.size()) + " reference snapshots to " + dir.string()};
}

CommandResult dispatch(const std::string& command, const fs::path& config_path,
                       const std::optional<fs::path>& output_dir, bool strict_dissipation) {
  try {
    RunConfig cfg = load_config(parse_config_file(config_path));
    if (output_dir) cfg.output_dir = *output_dir;
    cfg.strict_dissipation = cfg.strict_dissipation || strict_dissipation;
    if (command == "run") return cmd_run(cfg);
    if (command == "study-convergence") return cmd_convergence_study(cfg);
    if (command == "reference") return cmd_reference(cfg);
    return {ExitCode::Config, "unknown command '" + command + "'"};
  } catch (const ConfigError& e) {
    return {ExitCode::Config, std::string("config error: ") + e.what()};
  } catch (const IoError& e) {
    return {ExitCode::Io, std::string("io error: ") + e.what()};
  } catch (const fs::filesystem_error& e) {
    return {ExitCode::Io, std::string("io error: ") + e.what()};
  } catch (const GeometryError& e) {
    return {ExitCode::Config, std::string("config error: ") + e.what()};
  } catch (const std::exception& e) {
    return {ExitCode::Solver, std::string("solver error: ") + e.what()};
  }
}

}  // namespace crossdiff::cli
