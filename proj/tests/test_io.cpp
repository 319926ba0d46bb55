#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "survhte/dgp.hpp"
#include "survhte/io.hpp"

using namespace survhte;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("survhte_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

dgp::GeneratorConfig small_config() {
  dgp::GeneratorConfig c;
  c.p = 20;
  c.gamma = dgp::prognostic_vector(20);
  c.subgroup = SubgroupDefinition::at_least({16, 17, 18, 19});
  c.n = 40;
  return c;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("csv fields") {
    CHECK(io::split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(io::split_csv_line("\"x,1\",\"say \"\"hi\"\"\",z") == std::vector<std::string>{"x,1", "say \"hi\"", "z"});
    CHECK(io::split_csv_line("a,b\r") == std::vector<std::string>{"a", "b"});
    CHECK(io::csv_field("plain") == "plain");
    CHECK(io::csv_field("a,b") == "\"a,b\"");
    CHECK(io::csv_field("q\"") == "\"q\"\"\"");
    for (const std::string s : {"x1>=-1 & x2<=0", "a,\"b\"", ""}) CHECK(io::split_csv_line(io::csv_field(s))[0] == s);
  }

  TEST_CASE("numeric parsing is strict") {
    CHECK(io::parse_double("-1.5e-3") == -1.5e-3);
    CHECK_THROWS_AS(io::parse_double("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(io::parse_double(""), std::invalid_argument);
    CHECK(io::parse_uint("42") == 42u);
    CHECK_THROWS_AS(io::parse_uint("-3"), std::invalid_argument);
  }

  TEST_CASE("ragged rows name file and line") {
    TempDir tmp;
    const fs::path f = tmp.path / "bad.csv";
    std::ofstream(f) << "a,b\n1,2\n3\n";
    try {
      io::read_csv(f);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
  }

  TEST_CASE("calibration round trip") {
    TempDir tmp;
    const auto curve = dgp::calibrate(small_config(), dgp::beta_grid(21), 2000, 9);
    const fs::path f = tmp.path / "cal.csv";
    io::write_calibration(f, curve);
    CHECK(fs::exists(f.string() + ".json"));
    const auto back = io::read_calibration(f);
    CHECK(back.beta_grid == curve.beta_grid);
    CHECK(back.arr0 == curve.arr0);
    CHECK(back.arr1 == curve.arr1);
    CHECK(back.prevalence == curve.prevalence);
    CHECK(back.mc_size == curve.mc_size);
    CHECK(back.seed == curve.seed);
    CHECK(back.config_hash == curve.config_hash);
  }

  TEST_CASE("trial round trip") {
    TempDir tmp;
    auto cfg = small_config();
    cfg.censoring = dgp::BetaCensoring{};
    dgp::HeterogeneityPoint pt;
    pt.beta1 = -1.0;
    pt.beta0 = 0.5;
    const TrialData d = dgp::generate_trial(cfg, pt, 3);
    const fs::path f = tmp.path / "trial.csv";
    io::write_trial(f, d);
    const TrialData back = io::read_trial(f);
    CHECK(back.covariates == d.covariates);
    CHECK(back.treatment == d.treatment);
    CHECK(back.time == d.time);
    CHECK(back.event == d.event);
    CHECK(back.true_subgroup == d.true_subgroup);

    TrialData unlabeled = d;
    unlabeled.true_subgroup.reset();
    io::write_trial(f, unlabeled);
    CHECK_FALSE(io::read_trial(f).true_subgroup);
  }

  TEST_CASE("matrix reading") {
    TempDir tmp;
    const fs::path f = tmp.path / "m.csv";
    std::ofstream(f) << "u,v,w\n1,2,3\n-4.5,0,1e2\n";
    const Matrix m = io::read_matrix(f);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    CHECK(m(1, 0) == -4.5);
    CHECK(m(1, 2) == 100.0);
    std::ofstream(f) << "u\nabc\n";
    CHECK_THROWS(io::read_matrix(f));
  }
}
