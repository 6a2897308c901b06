#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "mixvox/binary_io.hpp"
#include "mixvox/checkpoint.hpp"
#include "mixvox/image_io.hpp"
#include "mixvox/train.hpp"

using namespace mixvox;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mixvox_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MIXVOX_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config text round trip") {
    RunConfig a = fixture::tiny_config(17);
    a.background = {0.25, 0.5, 1.0 / 3.0};
    a.lr_voxel = 0.0123456789;
    const RunConfig b = RunConfig::parse(a.to_text());
    CHECK(b == a);
    CHECK(b.to_text() == a.to_text());
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(RunConfig::parse("no_such_key = 3"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("batch_rays = many"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("just text"), ConfigError);
    RunConfig c;
    c.k_m = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.preset = "Q";
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("includes and comments") {
    const fs::path dir = scratch("include");
    write_text(dir / "base.cfg", "batch_rays = 100 # inline\nseed = 4\n");
    write_text(dir / "top.cfg", "include = base.cfg\nseed = 9\n");
    const RunConfig c = RunConfig::load((dir / "top.cfg").string());
    CHECK(c.batch_rays == 100);
    CHECK(c.seed == 9);
  }

  TEST_CASE("checkpoint round trip is byte identical") {
    const SyntheticScene s = fixture::tiny_scene();
    const TrainResult r = train(s.dataset, fixture::tiny_config(3));
    const auto bytes = encode_checkpoint(r.checkpoint);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.step == 3);
    CHECK(back.config_text == r.checkpoint.config_text);

    auto bumped = bytes;
    bumped[4] = 2;  // version field follows the magic
    try {
      decode_checkpoint(bumped);
      FAIL("version 2 accepted");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    CHECK_THROWS_AS(decode_checkpoint(cut), LoadError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(extra), LoadError);
  }

  TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    CHECK(run("--help") == 0);
    CHECK(run("train --data " + (dir / "nowhere").string() + " --out " + (dir / "o").string()) == 2);
    CHECK(run("train --bogus_key 3 --data " + dir.string()) == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("render --checkpoint " + (dir / "missing.mxvx").string() + " --out " + dir.string()) == 2);
    write_text(dir / "junk.mxvx", "junk");
    CHECK(run("eval --checkpoint " + (dir / "junk.mxvx").string() + " --data " + dir.string()) == 3);
  }

  TEST_CASE("synth, train, render, eval and mask end to end") {
    const fs::path dir = scratch("flow");
    write_text(dir / "scene.json", synthetic_spec_json(fixture::tiny_spec()));
    write_text(dir / "run.cfg", fixture::tiny_config(6).to_text());
    const std::string data = (dir / "data").string(), out = (dir / "run").string();

    REQUIRE(run("synth --spec " + (dir / "scene.json").string() + " --out " + data) == 0);
    CHECK(fs::exists(fs::path(data) / "poses.json"));
    CHECK(fs::exists(fs::path(data) / "labels.rle"));

    REQUIRE(run("train -c " + (dir / "run.cfg").string() + " --data " + data + " --out " + out +
                " --batch-rays 32") == 0);
    const fs::path ck = fs::path(out) / "final.mxvx";
    REQUIRE(fs::exists(ck));
    const RunConfig echoed = RunConfig::load((fs::path(out) / "config.cfg").string());
    CHECK(echoed.batch_rays == 32);
    CHECK(echoed.threads >= 1);
    const std::string log = slurp_text(fs::path(out) / "train_log.csv");
    CHECK(log.rfind(train_log_header(), 0) == 0);
    CHECK(load_checkpoint(ck.string()).step == 6);

    const MultiViewVideoDataset poses = load_poses(data);
    const std::string cam = poses.cameras[poses.eval_cameras()[0]].name;
    const fs::path frames = dir / "frames";
    REQUIRE(run("render --checkpoint " + ck.string() + " --data " + data + " --camera " + cam + " --time 1..2 --out " +
                frames.string() + " --depth") == 0);
    CHECK(fs::exists(frames / "frame_00001.png"));
    CHECK(fs::exists(frames / "frame_00002.png"));
    CHECK(fs::exists(frames / "depth_00002.png"));
    CHECK_FALSE(fs::exists(frames / "frame_00000.png"));
    CHECK(read_png((frames / "frame_00001.png").string()).width == poses.cameras[0].width);
    CHECK(run("render --checkpoint " + ck.string() + " --data " + data + " --camera " + cam + " --time 99 --out " +
              frames.string()) != 0);

    const fs::path report = dir / "report";
    REQUIRE(run("eval --checkpoint " + ck.string() + " --data " + data + " --stride 3 --out " + report.string()) == 0);
    const std::string csv = slurp_text(report / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(slurp_text(report / "metrics_summary.txt").find("mean_psnr_db") != std::string::npos);

    const fs::path mask = dir / "mask.rle";
    REQUIRE(run("mask --checkpoint " + ck.string() + " --beta 0.5 --out " + mask.string()) == 0);
    const DynamicMask m = decode_mask_rle(read_file_bytes(mask.string()));
    CHECK(m.kernel == 3);
    CHECK(run("mask --checkpoint " + ck.string() + " --data " + data + " --out " + mask.string()) == 2);
  }
}
