/// @file cli.hpp
/// @brief Batch driver: flat key/value configs, CSV output and the run,
/// convergence-study and reference commands.
///
/// Config files hold one `key = value` per line; `#` starts a comment.
/// Recognized keys:
///
///     model.name  model.dim  model.params.<name>
///     grid.lower  grid.upper  grid.cells
///     time.tau  time.steps
///     pdfb.gamma  pdfb.gamma_bar  pdfb.tol  pdfb.max_iter  pdfb.projection
///     output.dir  output.every
///     study.taus  study.final_time
///     reference.tau  reference.final_time  reference.every
#pragma once

#include "crossdiff/jko.hpp"
#include "crossdiff/reference.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossdiff::cli {

enum class ExitCode : int { Ok = 0, Config = 2, Solver = 3, Io = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw `key = value` pairs with the line each came from.
struct ConfigEntry {
  std::string value;
  int line = 0;
};
using ConfigMap = std::map<std::string, ConfigEntry>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::filesystem::path& path);

struct RunConfig {
  std::string model_name = "skt";
  int dim = 1;
  std::map<std::string, double> params;
  std::optional<double> lower, upper;
  std::optional<int> cells;
  std::optional<double> tau;
  std::optional<int> steps;
  PdfbConfig pdfb;
  std::filesystem::path output_dir = "output";
  int output_every = 1;
  std::vector<double> study_taus{0.4, 0.2, 0.1, 0.05};
  double study_final_time = 1.0;
  double reference_tau = 1e-3;
  double reference_final_time = 1.0;
  int reference_every = 100;
  bool strict_dissipation = false;
};

/// Typed config; unknown keys and malformed values throw ConfigError.
RunConfig load_config(const ConfigMap& entries);

/// Model, grid and time settings with model defaults filled in.
struct Resolved {
  ModelSpec model;
  Grid grid;
  double tau = 0.0;
  int steps = 0;
};
Resolved resolve(const RunConfig& config);

// --- CSV ----------------------------------------------------------------------

/// `x[,y],mu_1..mu_n`, one row per cell.
void write_fields_csv(const std::filesystem::path& path, const Grid& grid, int species, std::span<const double> mu);
/// `step,time,energy,mass_1..mass_n,min_box_slack,pdfb_iters,primal_res,dual_res`.
void write_diagnostics_csv(const std::filesystem::path& path, int species, const std::vector<StepDiagnostics>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const;
};
/// Numeric CSV with a header line; empty cells read as NaN.
CsvTable read_csv(const std::filesystem::path& path);

/// Exact decimal form used in every output file.
std::string format_double(double v);

// --- commands -----------------------------------------------------------------

struct CommandResult {
  ExitCode code = ExitCode::Ok;
  std::string message;
};

CommandResult cmd_run(const RunConfig& config);
CommandResult cmd_convergence_study(const RunConfig& config);
CommandResult cmd_reference(const RunConfig& config);

/// Loads `config_path`, applies the overrides and dispatches `command`
/// (run, study-convergence, reference). Errors map to exit codes.
CommandResult dispatch(const std::string& command, const std::filesystem::path& config_path,
                       const std::optional<std::filesystem::path>& output_dir, bool strict_dissipation);

}  // namespace crossdiff::cli
