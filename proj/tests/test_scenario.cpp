#include <qwork/scenario.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "support.hpp"

using namespace qwork;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

ScenarioConfig tiny_config() {
  ScenarioConfig cfg = default_config();
  cfg.tau_grid_ms = {0.05, 0.1};
  cfg.beta_z = {0.6};
  cfg.n_steps = 500;
  cfg.sampling.n_grid = {10, 50};
  cfg.sampling.replicas = 40;
  cfg.sampling.seed = 1234;
  return cfg;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void require_same_config(const ScenarioConfig& a, const ScenarioConfig& b) {
  REQUIRE(a.base.z_khz == b.base.z_khz);
  REQUIRE(a.base.x_max_khz == b.base.x_max_khz);
  REQUIRE(a.base.schedule.shape == b.base.schedule.shape);
  REQUIRE(a.base.schedule.nodes == b.base.schedule.nodes);
  REQUIRE(a.tau_grid_ms == b.tau_grid_ms);
  REQUIRE(a.beta_z == b.beta_z);
  REQUIRE(a.sta == b.sta);
  REQUIRE(a.n_steps == b.n_steps);
  REQUIRE(a.readout.has_value() == b.readout.has_value());
  if (a.readout)
    REQUIRE((a.readout->matrix() - b.readout->matrix()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.sampling.n_grid == b.sampling.n_grid);
  REQUIRE(a.sampling.replicas == b.sampling.replicas);
  REQUIRE(a.sampling.seed == b.sampling.seed);
  REQUIRE(a.out_dir == b.out_dir);
  REQUIRE(a.format == b.format);
}

std::string cli() { return QWORK_CLI_PATH; }

int run_cli(const std::string& args) {
  return testsupport::run_command(cli() + " " + args + " >/dev/null 2>&1");
}

}  // namespace

TEST_CASE("an empty config object yields the built-in defaults") {
  const ScenarioConfig parsed = parse_config(nlohmann::json::object());
  require_same_config(parsed, default_config());
}

TEST_CASE("the bundled default config matches the built-in defaults") {
  const ScenarioConfig bundled = load_config(fs::path(QWORK_REPO_DIR) / "configs/default.json");
  require_same_config(bundled, default_config());
}

TEST_CASE("config round-trips through its canonical echo") {
  ScenarioConfig cfg = tiny_config();
  cfg.sta = StaMode::On;
  cfg.format = OutputFormat::Json;
  cfg.base.schedule = piecewise_linear({0.0, 1.5, 4.0});
  require_same_config(parse_config(config_to_json(cfg)), cfg);

  cfg.readout.reset();
  require_same_config(parse_config(config_to_json(cfg)), cfg);
}

TEST_CASE("config parsing rejects malformed input") {
  const auto reject = [](const char* text) {
    REQUIRE_THROWS_AS(parse_config(nlohmann::json::parse(text)), config_error);
  };
  reject(R"({"bogus_key": 1})");
  reject(R"({"tau_grid_ms": []})");
  reject(R"({"tau_grid_ms": [0.0]})");
  reject(R"({"tau_grid_ms": [-0.1]})");
  reject(R"({"beta_z": ["x"]})");
  reject(R"({"sta": "maybe"})");
  reject(R"({"n_steps": -1})");
  reject(R"({"n_steps": 60000000})");
  reject(R"({"n_steps": 1.5})");
  reject(R"({"sampling": {"n_grid": [10, 10]}})");
  reject(R"({"sampling": {"n_grid": [10, 5]}})");
  reject(R"({"sampling": {"replicas": 1}})");
  reject(R"({"sampling": {"seed": -3}})");
  reject(R"({"output": {"format": "xml"}})");
  reject(R"({"output": {"dir": ""}})");
  reject(R"({"readout": {"confusion": [[0.9, 0.2], [0.1, 0.8], [0.0, 0.0]]}})");
  reject(R"({"readout": {"confusion": [[0.9, 0.3], [0.1, 0.8]]}})");
  reject(R"({"protocol": {"schedule": {"shape": "piecewise_linear", "nodes": [1.0]}}})");
  reject(R"({"protocol": {"schedule": "sawtooth"}})");
  reject(R"({"protocol": {"z_khz": 0.0}})");
}

TEST_CASE("readout null clears the model") {
  const ScenarioConfig cfg = parse_config(nlohmann::json::parse(R"({"readout": null})"));
  REQUIRE_FALSE(cfg.readout.has_value());
}

TEST_CASE("load_config reports unreadable and unparsable files") {
  REQUIRE_THROWS_AS(load_config("/nonexistent/qwork.json"), config_error);
  const fs::path dir = fresh_dir("qwork_badcfg");
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << "{ not json";
  REQUIRE_THROWS_AS(load_config(bad), config_error);
}

TEST_CASE("scenario tables have the documented shapes") {
  const ScenarioConfig cfg = tiny_config();

  const Table sweep = sweep_tau_table(cfg);
  REQUIRE(sweep.columns ==
          std::vector<std::string>{"tau_ms", "beta_z", "kind", "n_steps", "gamma", "mean_exp_w",
                                   "var_exp_w", "delta_f_khz", "exp_neg_beta_df",
                                   "jarzynski_residual", "var_adiabatic", "var_sudden"});
  REQUIRE(sweep.rows.size() == 4);  // 1 beta x 2 kinds x 2 taus

  const Table sta = sta_compare_table(cfg);
  REQUIRE(sta.rows.size() == 4);
  REQUIRE(std::get<std::string>(sta.rows[0][2]) == "bare");
  REQUIRE(std::get<std::string>(sta.rows[1][2]) == "cd");

  const Table joint = joint_probs_table(cfg);
  REQUIRE(joint.rows.size() == 12);  // 3 stages per point
  REQUIRE(std::get<std::string>(joint.rows[0][3]) == "ideal");
  REQUIRE(std::get<std::string>(joint.rows[1][3]) == "measured");
  REQUIRE(std::get<std::string>(joint.rows[2][3]) == "corrected");

  const Table est = estimator_table(cfg);
  REQUIRE(est.rows.size() == 8);  // 2 kinds x 2 taus x 2 sample counts

  const Table gamma = gamma_table(cfg);
  REQUIRE(gamma.rows.size() == 2);

  const Table wave = cd_waveform_table(cfg);
  REQUIRE(wave.rows.size() == 402);

  REQUIRE_THROWS_AS(scenario_table(cfg, "bogus"), std::invalid_argument);
}

TEST_CASE("ideal and corrected joint tables agree") {
  const ScenarioConfig cfg = tiny_config();
  const Table joint = joint_probs_table(cfg);
  for (size_t r = 0; r + 2 < joint.rows.size(); r += 3) {
    for (size_t c = 4; c < 8; ++c) {
      const double ideal = std::get<double>(joint.rows[r][c]);
      const double corrected = std::get<double>(joint.rows[r + 2][c]);
      REQUIRE_THAT(corrected, WithinAbs(ideal, 1e-10));
    }
    REQUIRE(std::get<double>(joint.rows[r + 2][8]) <= 1e-10);  // clamp_adjustment
  }
}

TEST_CASE("sweep rows carry the closed-form references") {
  const ScenarioConfig cfg = tiny_config();
  const Table sweep = sweep_tau_table(cfg);
  const testsupport::ClosedForm ref;
  for (const auto& row : sweep.rows) {
    REQUIRE_THAT(std::get<double>(row[5]), WithinAbs(ref.mean_exp_w(0.6), 1e-9));
    REQUIRE_THAT(std::get<double>(row[8]), WithinAbs(ref.mean_exp_w(0.6), 1e-12));
    REQUIRE(std::get<double>(row[9]) <= 1e-12);  // jarzynski residual
    REQUIRE_THAT(std::get<double>(row[10]), WithinAbs(ref.var_adiabatic(0.6), 1e-12));
    REQUIRE_THAT(std::get<double>(row[11]), WithinAbs(ref.var_sudden(0.6), 1e-12));
  }
}

TEST_CASE("tables serialize deterministically in both formats") {
  ScenarioConfig cfg = tiny_config();
  const fs::path dir = fresh_dir("qwork_run_twice");

  cfg.out_dir = dir.string();
  const RunResult ra = run_scenario(cfg, "gamma");
  REQUIRE(ra.files.size() == 2);
  std::vector<std::string> first;
  for (const auto& f : ra.files) first.push_back(testsupport::read_bytes(f.string()));

  const RunResult rb = run_scenario(cfg, "gamma");
  REQUIRE(rb.files.size() == 2);
  for (size_t i = 0; i < ra.files.size(); ++i)
    REQUIRE(first[i] == testsupport::read_bytes(rb.files[i].string()));

  cfg.format = OutputFormat::Json;
  cfg.out_dir = (dir / "json").string();
  const RunResult rj = run_scenario(cfg, "gamma");
  REQUIRE(rj.files[0].extension() == ".json");
  const std::string body = testsupport::read_bytes(rj.files[0].string());
  REQUIRE(body.find("\"columns\"") != std::string::npos);
  REQUIRE(body.back() == '\n');
}

TEST_CASE("csv cells round-trip to full precision") {
  ScenarioConfig cfg = tiny_config();
  const fs::path dir = fresh_dir("qwork_csvprec");
  cfg.out_dir = dir.string();
  run_scenario(cfg, "sweep-tau");
  const testsupport::Csv csv = testsupport::read_csv((dir / "sweep-tau.csv").string());
  REQUIRE(csv.rows.size() == 4);
  REQUIRE(csv.num(0, "tau_ms") == 0.05);
  const testsupport::ClosedForm ref;
  REQUIRE_THAT(csv.num(0, "exp_neg_beta_df"), WithinAbs(ref.mean_exp_w(0.6), 1e-12));
  // n_steps is an integer cell, emitted without a decimal point.
  REQUIRE(csv.str(0, "n_steps") == "500");
}

TEST_CASE("named scenario entry points write their files") {
  ScenarioConfig cfg = tiny_config();
  cfg.tau_grid_ms = {0.05};
  const fs::path dir = fresh_dir("qwork_named");
  cfg.out_dir = dir.string();
  REQUIRE(run_gamma_report(cfg).files.size() == 2);
  REQUIRE(run_cd_waveform(cfg).files.size() == 2);
  REQUIRE(fs::exists(dir / "gamma.csv"));
  REQUIRE(fs::exists(dir / "gamma.manifest.json"));
  REQUIRE(fs::exists(dir / "cd-waveform.csv"));
}

TEST_CASE("manifest echoes the config and references") {
  ScenarioConfig cfg = tiny_config();
  const fs::path dir = fresh_dir("qwork_manifest");
  cfg.out_dir = dir.string();
  run_scenario(cfg, "gamma");
  const nlohmann::json manifest =
      nlohmann::json::parse(testsupport::read_bytes((dir / "gamma.manifest.json").string()));
  REQUIRE(manifest.at("tool") == "qwork");
  REQUIRE(manifest.at("scenario") == "gamma");
  REQUIRE(manifest.at("references").size() == 1);
  const testsupport::ClosedForm ref;
  REQUIRE_THAT(manifest.at("references")[0].at("var_sudden").get<double>(),
               WithinAbs(ref.var_sudden(0.6), 1e-12));
  require_same_config(parse_config(manifest.at("config")), cfg);
}

TEST_CASE("the command line front end maps errors to exit codes") {
  const fs::path dir = fresh_dir("qwork_cli");
  const fs::path cfg_path = dir / "tiny.json";
  {
    ScenarioConfig cfg = tiny_config();
    cfg.tau_grid_ms = {0.05};
    cfg.sampling.n_grid = {10, 50};
    cfg.sampling.replicas = 20;
    std::ofstream out(cfg_path);
    out << config_to_json(cfg).dump(2) << "\n";
  }

  REQUIRE(run_cli("--help") == 0);
  REQUIRE(run_cli("") == 2);                 // missing subcommand
  REQUIRE(run_cli("frobnicate") == 2);       // unknown subcommand
  REQUIRE(run_cli("sweep-tau --config /nonexistent.json") == 2);
  REQUIRE(run_cli("sweep-tau --config " + cfg_path.string() + " --format xml") == 2);

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << "{ nope";
  REQUIRE(run_cli("gamma --config " + bad.string()) == 2);

  const fs::path out_dir = dir / "out";
  REQUIRE(run_cli("gamma --config " + cfg_path.string() + " --out " + out_dir.string()) == 0);
  REQUIRE(fs::exists(out_dir / "gamma.csv"));
  REQUIRE(fs::exists(out_dir / "gamma.manifest.json"));

  REQUIRE(run_cli("estimator --config " + cfg_path.string() + " --out " + out_dir.string() +
                  " --seed 77 --format json") == 0);
  REQUIRE(fs::exists(out_dir / "estimator.json"));
  const nlohmann::json est =
      nlohmann::json::parse(testsupport::read_bytes((out_dir / "estimator.json").string()));
  REQUIRE(est.at("name") == "estimator");

  // The seed override lands in the manifest's config echo.
  const nlohmann::json manifest = nlohmann::json::parse(
      testsupport::read_bytes((out_dir / "estimator.manifest.json").string()));
  REQUIRE(manifest.at("config").at("sampling").at("seed").get<std::uint64_t>() == 77);

  REQUIRE(run_cli("sweep-tau --config " + cfg_path.string() + " --out " + out_dir.string() +
                  " --steps 300") == 0);
  const testsupport::Csv sweep = testsupport::read_csv((out_dir / "sweep-tau.csv").string());
  REQUIRE(sweep.str(0, "n_steps") == "300");
}
