#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "crpm/polsar.hpp"
#include "crpm/serialize.hpp"

namespace fs = std::filesystem;
using namespace crpm;

namespace {

const std::string kDir = "/tmp/crpm_cli_test";

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string log = kDir + "/last_run.log";
  const std::string cmd = std::string(CRPM_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void make_workspace() {
  fs::create_directories(kDir);
  static bool done = false;
  if (done) return;
  done = true;
  RunResult r = run("synth --out " + kDir + "/scene.c3 --classes 2 --size 64x64 --looks 4 --seed 11");
  REQUIRE(r.code == 0);
  r = run("train --data " + kDir + "/scene.c3 --out " + kDir +
          "/m --epochs1 2 --epochs2 1 --per-class 50 --seed 11");
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("synth: determinism, counts, flag validation") {
  fs::create_directories(kDir);
  RunResult a = run("synth --out " + kDir + "/s1.c3 --classes 3 --size 48x40 --looks 4 --seed 2");
  CHECK(a.code == 0);
  CHECK(a.out.find("class=1 pixels=") != std::string::npos);
  CHECK(a.out.find("class=3 pixels=") != std::string::npos);
  RunResult b = run("synth --out " + kDir + "/s2.c3 --classes 3 --size 48x40 --looks 4 --seed 2");
  CHECK(b.code == 0);
  CHECK(slurp(kDir + "/s1.c3") == slurp(kDir + "/s2.c3"));
  CHECK(slurp(kDir + "/s1.c3.labels.pgm") == slurp(kDir + "/s2.c3.labels.pgm"));

  CHECK(run("synth --out " + kDir + "/bad.c3 --looks 2").code == 2);
  CHECK(run("synth --out " + kDir + "/bad.c3 --size nope").code == 2);
  CHECK(run("synth --out " + kDir + "/bad.c3 --layout diagonal").code == 2);
  CHECK(run("synth").code == 2);  // missing required --out
}

TEST_CASE("train: emits artifacts, deterministic, honors --stop-after cs") {
  make_workspace();
  CHECK(fs::exists(kDir + "/m.cs.model"));
  CHECK(fs::exists(kDir + "/m.crpm.model"));
  CHECK(fs::exists(kDir + "/m.omap.pgm"));

  RunResult r = run("train --data " + kDir + "/scene.c3 --out " + kDir +
                    "/m2 --epochs1 2 --epochs2 1 --per-class 50 --seed 11");
  CHECK(r.code == 0);
  CHECK(slurp(kDir + "/m.cs.model") == slurp(kDir + "/m2.cs.model"));
  CHECK(slurp(kDir + "/m.crpm.model") == slurp(kDir + "/m2.crpm.model"));
  CHECK(r.out.find("epoch=") != std::string::npos);
  CHECK(r.out.find("loss=") != std::string::npos);

  r = run("train --data " + kDir + "/scene.c3 --out " + kDir +
          "/m3 --epochs1 1 --epochs2 1 --per-class 50 --seed 11 --stop-after cs");
  CHECK(r.code == 0);
  CHECK(fs::exists(kDir + "/m3.cs.model"));
  CHECK_FALSE(fs::exists(kDir + "/m3.crpm.model"));

  CHECK(run("train --data " + kDir + "/missing.c3 --out " + kDir + "/x").code == 1);
}

TEST_CASE("train: unlabeled scene is a training precondition failure") {
  make_workspace();
  CovarianceScene s = load_c3(kDir + "/scene.c3");
  s.labels.clear();
  save_c3(kDir + "/unlabeled.c3", s);
  RunResult r = run("train --data " + kDir + "/unlabeled.c3 --out " + kDir + "/u");
  CHECK(r.code == 3);
  CHECK(r.out.find("error: exit=3") != std::string::npos);
}

TEST_CASE("predict: cs and dilated agree, timing line, dims match") {
  make_workspace();
  RunResult rc = run("predict --model " + kDir + "/m.cs.model --data " + kDir +
                     "/scene.c3 --net cs --out " + kDir + "/p_cs.pgm");
  CHECK(rc.code == 0);
  CHECK(rc.out.find("pred_time_s=") != std::string::npos);
  {
    std::istringstream is(rc.out.substr(rc.out.find("pred_time_s=") + 12));
    double t = -1;
    is >> t;
    CHECK(t >= 0.0);
  }
  RunResult rd = run("predict --model " + kDir + "/m.cs.model --data " + kDir +
                     "/scene.c3 --net dilated --out " + kDir + "/p_dil.pgm");
  CHECK(rd.code == 0);
  CHECK(slurp(kDir + "/p_cs.pgm") == slurp(kDir + "/p_dil.pgm"));

  PgmMap map = load_pgm(kDir + "/p_dil.pgm");
  CovarianceScene s = load_c3(kDir + "/scene.c3");
  CHECK(map.height == s.height);
  CHECK(map.width == s.width);

  RunResult rp = run("predict --model " + kDir + "/m.crpm.model --data " + kDir +
                     "/scene.c3 --net crpm --out " + kDir +
                     "/p_crpm.pgm --color " + kDir + "/p_crpm.ppm");
  CHECK(rp.code == 0);
  CHECK(fs::exists(kDir + "/p_crpm.ppm"));
  CHECK(fs::exists(kDir + "/p_crpm.ppm.palette.json"));

  // Net/model incompatibility.
  CHECK(run("predict --model " + kDir + "/m.crpm.model --data " + kDir +
            "/scene.c3 --net cs --out " + kDir + "/x.pgm")
            .code == 4);
  CHECK(run("predict --model " + kDir + "/m.cs.model --data " + kDir +
            "/scene.c3 --net crpm --out " + kDir + "/x.pgm")
            .code == 4);
}

TEST_CASE("evaluate: perfect map, report file, mismatch handling") {
  make_workspace();
  RunResult r = run("evaluate --pred " + kDir + "/scene.c3.labels.pgm --labels " +
                    kDir + "/scene.c3.labels.pgm --report " + kDir + "/rep.json");
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(kDir + "/rep.json"));
  CHECK(j.at("oa").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("kappa").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("fwiou").get<double>() == doctest::Approx(1.0));

  // Dimension mismatch -> exit 4.
  save_pgm(kDir + "/small.pgm", std::vector<std::uint16_t>(16, 1), 4, 4);
  CHECK(run("evaluate --pred " + kDir + "/small.pgm --labels " + kDir +
            "/scene.c3.labels.pgm")
            .code == 4);

  // All-unlabeled maps -> explicit empty-matrix error.
  save_pgm(kDir + "/zero.pgm", std::vector<std::uint16_t>(16, 0), 4, 4);
  RunResult rz = run("evaluate --pred " + kDir + "/zero.pgm --labels " + kDir + "/zero.pgm");
  CHECK(rz.code == 4);
  CHECK(rz.out.find("empty confusion matrix") != std::string::npos);
}

TEST_CASE("gradcheck: pass by default, harness sanity, fault injection") {
  fs::create_directories(kDir);
  RunResult ok = run("gradcheck --instances 3");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);

  RunResult impossible = run("gradcheck --instances 2 --tolerance 1e-300");
  CHECK(impossible.code == 1);
  CHECK(impossible.out.find("pass") == std::string::npos);

  RunResult fault = run("gradcheck --instances 2 --corrupt crelu");
  CHECK(fault.code == 1);
  std::istringstream is(fault.out);
  std::string line;
  int fails = 0;
  while (std::getline(is, line)) {
    if (line.find("FAIL") == std::string::npos) continue;
    ++fails;
    CHECK(line.find("op=crelu") != std::string::npos);
  }
  CHECK(fails == 1);
}

TEST_CASE("unknown subcommand and missing files map to stable exit codes") {
  fs::create_directories(kDir);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("predict --model nope.model --data nope.c3 --out x.pgm").code == 1);
  CHECK(run("evaluate --pred nope.pgm --labels nope.pgm").code == 1);
}
