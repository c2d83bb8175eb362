/// @file test_cli.cpp
/// @brief Config parsing, CSV round trips and the batch commands.
#include "crossdiff/cli.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace crossdiff;
using namespace crossdiff::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("crossdiff_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyRun = R"(# small SKT run
model.name = skt
grid.cells = 16
time.tau = 0.1
time.steps = 3
output.every = 2
)";

}  // namespace

TEST(Config, ParseText) {
  const auto m = parse_config_text("a = 1\n\n  # comment\nb=two words  # trailing\n");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("a").value, "1");
  EXPECT_EQ(m.at("a").line, 1);
  EXPECT_EQ(m.at("b").value, "two words");
  EXPECT_EQ(m.at("b").line, 4);
}

TEST(Config, ParseErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("a = 1\nnoequals\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a = 1\na = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message(" = 3\n").find("empty key"), std::string::npos);
  EXPECT_NE(message("x =\n").find("empty value"), std::string::npos);
}

TEST(Config, LoadTypedValues) {
  const auto c = load_config(parse_config_text(
      "model.name = saturation_fp\nmodel.params.a = 0.3\ngrid.lower = -2\ngrid.upper = 2\ngrid.cells = 40\n"
      "time.tau = 0.05\ntime.steps = 7\npdfb.gamma = auto\npdfb.gamma_bar = 0.2\npdfb.tol = 1e-7\n"
      "pdfb.max_iter = 99\npdfb.projection = admm\noutput.dir = out\noutput.every = 3\n"
      "study.taus = [0.2, 0.1]\nstudy.final_time = 0.5\nreference.tau = 1e-4\nreference.final_time = 0.2\n"
      "reference.every = 10\n"));
  EXPECT_EQ(c.model_name, "saturation_fp");
  EXPECT_DOUBLE_EQ(c.params.at("a"), 0.3);
  EXPECT_EQ(*c.cells, 40);
  EXPECT_DOUBLE_EQ(*c.tau, 0.05);
  EXPECT_EQ(*c.steps, 7);
  EXPECT_EQ(c.pdfb.gamma, 0.0);
  EXPECT_DOUBLE_EQ(c.pdfb.gamma_bar, 0.2);
  EXPECT_DOUBLE_EQ(c.pdfb.tol, 1e-7);
  EXPECT_EQ(c.pdfb.max_iter, 99);
  EXPECT_EQ(c.pdfb.projection, ProjectionMethod::Admm);
  EXPECT_EQ(c.output_dir, fs::path("out"));
  EXPECT_EQ(c.output_every, 3);
  EXPECT_EQ(c.study_taus, (std::vector<double>{0.2, 0.1}));
  EXPECT_DOUBLE_EQ(c.reference_tau, 1e-4);
  EXPECT_EQ(c.reference_every, 10);

  const auto r = resolve(c);
  EXPECT_EQ(r.grid.num_cells(), 40);
  EXPECT_DOUBLE_EQ(r.grid.h, 0.1);
  EXPECT_FALSE(r.model.parameters.at("a").published);
}

TEST(Config, RejectsBadValues) {
  auto fails_at = [](const std::string& text, const std::string& needle) {
    try {
      load_config(parse_config_text(text));
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  EXPECT_TRUE(fails_at("model.name = skt\nfoo.bar = 1\n", "line 2, key 'foo.bar': unknown key"));
  EXPECT_TRUE(fails_at("time.tau = -1\n", "positive"));
  EXPECT_TRUE(fails_at("time.steps = 1.5\n", "integer"));
  EXPECT_TRUE(fails_at("pdfb.tol = abc\n", "number"));
  EXPECT_TRUE(fails_at("pdfb.projection = cg\n", "unknown projection"));
  EXPECT_TRUE(fails_at("model.dim = 3\n", "dimension"));
  EXPECT_TRUE(fails_at("study.taus = \n", "empty value") || fails_at("study.taus = ,\n", "list"));
}

TEST(Config, ResolveErrors) {
  RunConfig c;
  c.model_name = "bogus";
  try {
    resolve(c);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : model_names()) EXPECT_NE(msg.find(n), std::string::npos);
  }
  c.model_name = "skt";
  c.lower = 1;
  c.upper = 0;
  EXPECT_THROW(resolve(c), ConfigError);
}

TEST(Csv, FieldsRoundTripExactly) {
  TempDir tmp;
  const Grid g = Grid::square(3, 0, 1);
  std::vector<double> mu(18);
  for (int k = 0; k < 18; ++k) mu[k] = std::exp(0.37 * k) / 3.0;
  const auto p = tmp.path() / "f.csv";
  write_fields_csv(p, g, 2, mu);
  const auto t = read_csv(p);
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y", "mu_1", "mu_2"}));
  ASSERT_EQ(t.rows.size(), 9u);
  const auto m2 = t.column("mu_2");
  for (int i = 0; i < 9; ++i) EXPECT_EQ(m2[i], mu[9 + i]);
  EXPECT_EQ(t.column("y")[4], g.cell_center(4)[1]);
  EXPECT_THROW(t.column("mu_3"), std::out_of_range);
}

TEST(Csv, ReadErrors) {
  TempDir tmp;
  EXPECT_THROW(read_csv(tmp.path() / "missing.csv"), IoError);
  EXPECT_THROW(read_csv(write_file(tmp.path() / "e.csv", "")), IoError);
  EXPECT_THROW(read_csv(write_file(tmp.path() / "b.csv", "a,b\n1,x\n")), IoError);
  EXPECT_THROW(read_csv(write_file(tmp.path() / "c.csv", "a,b\n1\n")), IoError);
  const auto t = read_csv(write_file(tmp.path() / "n.csv", "a,b\n1,\n"));
  EXPECT_TRUE(std::isnan(t.rows[0][1]));
}

TEST(Commands, RunWritesOutputsAndIsReproducible) {
  TempDir tmp;
  const auto cfg = write_file(tmp.path() / "run.cfg", kTinyRun);
  const auto a = tmp.path() / "a";
  const auto b = tmp.path() / "b";
  const auto ra = dispatch("run", cfg, a, false);
  ASSERT_EQ(ra.code, ExitCode::Ok) << ra.message;
  ASSERT_EQ(dispatch("run", cfg, b, false).code, ExitCode::Ok);

  for (const char* f : {"fields_0.csv", "fields_2.csv", "fields_3.csv", "diagnostics.csv", "run_meta.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    if (std::string(f) != "run_meta.json") EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_FALSE(fs::exists(a / "fields_1.csv"));

  const auto d = read_csv(a / "diagnostics.csv");
  EXPECT_EQ(d.header, (std::vector<std::string>{"step", "time", "energy", "mass_1", "mass_2", "min_box_slack",
                                                "pdfb_iters", "primal_res", "dual_res"}));
  ASSERT_EQ(d.rows.size(), 4u);
  const auto e = d.column("energy");
  const auto m1 = d.column("mass_1");
  for (int k = 1; k < 4; ++k) {
    EXPECT_LE(e[k], e[k - 1] + dissipation_slack(e[k - 1]));
    EXPECT_NEAR(m1[k], m1[0], 1e-12);
  }

  const auto meta = nlohmann::json::parse(slurp(a / "run_meta.json"));
  EXPECT_EQ(meta["command"], "run");
  EXPECT_EQ(meta["model"]["name"], "skt");
  EXPECT_EQ(meta["grid"]["cells"], 16);
  EXPECT_EQ(meta["time"]["steps"], 3);
  EXPECT_EQ(meta["pdfb"]["gamma"], "auto");
  EXPECT_TRUE(meta["completed"].get<bool>());
}

TEST(Commands, ZeroStepsWritesInitialStateOnly) {
  TempDir tmp;
  const auto cfg = write_file(tmp.path() / "z.cfg", "model.name = skt\ngrid.cells = 8\ntime.steps = 0\n");
  const auto out = tmp.path() / "o";
  ASSERT_EQ(dispatch("run", cfg, out, false).code, ExitCode::Ok);
  EXPECT_TRUE(fs::exists(out / "fields_0.csv"));
  EXPECT_EQ(read_csv(out / "diagnostics.csv").rows.size(), 1u);
}

TEST(Commands, ExitCodes) {
  TempDir tmp;
  const auto bad_key = write_file(tmp.path() / "k.cfg", "model.name = skt\nnot.a.key = 1\n");
  const auto r = dispatch("run", bad_key, tmp.path() / "o", false);
  EXPECT_EQ(r.code, ExitCode::Config);
  EXPECT_NE(r.message.find("line 2"), std::string::npos);

  const auto bad_model = write_file(tmp.path() / "m.cfg", "model.name = heat\n");
  const auto rm = dispatch("run", bad_model, tmp.path() / "o", false);
  EXPECT_EQ(rm.code, ExitCode::Config);
  for (const auto& n : model_names()) EXPECT_NE(rm.message.find(n), std::string::npos);

  EXPECT_EQ(dispatch("run", tmp.path() / "nope.cfg", std::nullopt, false).code, ExitCode::Io);
  EXPECT_EQ(dispatch("dance", bad_key, std::nullopt, false).code, ExitCode::Config);

  // output path blocked by a regular file
  const auto blocker = write_file(tmp.path() / "blocker", "x");
  const auto ok = write_file(tmp.path() / "ok.cfg", "model.name = skt\ngrid.cells = 8\ntime.steps = 0\n");
  EXPECT_EQ(dispatch("run", ok, blocker / "sub", false).code, ExitCode::Io);

  // saturation has no reference scheme
  const auto sat = write_file(tmp.path() / "s.cfg", "model.name = saturation_fp\n");
  EXPECT_EQ(dispatch("reference", sat, tmp.path() / "r", false).code, ExitCode::Config);
}

TEST(Commands, ReferenceAndStudy) {
  TempDir tmp;
  const auto cfg = write_file(tmp.path() / "s.cfg",
                              "model.name = skt\ngrid.cells = 12\nstudy.taus = 0.2, 0.1\nstudy.final_time = 0.2\n"
                              "reference.tau = 0.01\nreference.final_time = 0.05\nreference.every = 2\n");
  const auto ref = tmp.path() / "ref";
  ASSERT_EQ(dispatch("reference", cfg, ref, false).code, ExitCode::Ok);
  for (const char* f : {"fields_0.csv", "fields_2.csv", "fields_4.csv", "fields_5.csv", "diagnostics.csv"})
    EXPECT_TRUE(fs::exists(ref / f)) << f;

  const auto st = tmp.path() / "study";
  const auto r = dispatch("study-convergence", cfg, st, false);
  ASSERT_EQ(r.code, ExitCode::Ok) << r.message;
  const auto t = read_csv(st / "convergence.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"tau", "relative_error", "order"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(t.rows[0][2]));
  const double order = std::log(t.rows[0][1] / t.rows[1][1]) / std::log(2.0);
  EXPECT_NEAR(t.rows[1][2], order, 1e-12);
  EXPECT_TRUE(fs::exists(st / "reference_final.csv"));
  EXPECT_TRUE(fs::exists(st / "pdfb_final_1.csv"));
}

TEST(Csv, FormatDoubleIsExact) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678}) EXPECT_EQ(std::stod(format_double(v)), v);
}
