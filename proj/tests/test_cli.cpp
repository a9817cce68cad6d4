#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fsg/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run fsgnet(const std::string& args) {
  const std::string cmd = std::string(FSGNET_BIN) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path& root() {
  static const fs::path p = [] {
    fs::remove_all(FSG_TEST_TMP);
    fs::create_directories(FSG_TEST_TMP);
    return fs::path(FSG_TEST_TMP);
  }();
  return p;
}

std::string path(const std::string& name) { return (root() / name).string(); }

const char* kTinyModel = " --width 0.25 --epochs 1 --batch 4";

void ensure_dataset() {
  if (fs::exists(root() / "d" / "train")) return;
  const Run r = fsgnet("synth --out " + path("d") + " --size 32 --train-count 4 --val-count 2 --test-count 2 --seed 7");
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(fsgnet("--help").code == 0);
  CHECK(fsgnet("train --help").out.find("--lr-backbone") != std::string::npos);
  CHECK(fsgnet("").code == 1);
  CHECK(fsgnet("frobnicate").code == 1);
  CHECK(fsgnet("synth --out " + path("x") + " --bogus 3").code == 1);
  CHECK(fsgnet("train --data " + path("missing") + " --out " + path("c")).code == 1);
  CHECK(fsgnet("synth --out " + path("x") + " --config " + path("missing.cfg")).code == 1);
}

TEST_CASE("synth writes the split layout deterministically") {
  ensure_dataset();
  CHECK(fs::exists(root() / "d" / "train" / "s00000_A.png"));
  CHECK(fs::exists(root() / "d" / "val"));
  CHECK(fs::exists(root() / "d" / "test"));
  REQUIRE(fsgnet("synth --out " + path("d2") + " --size 32 --train-count 4 --val-count 2 --test-count 2 --seed 7").code == 0);
  for (const auto& e : fs::recursive_directory_iterator(root() / "d")) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = root() / "d2" / fs::relative(e.path(), root() / "d");
    CHECK(slurp(e.path()) == slurp(twin));
  }
  CHECK(fsgnet("synth --out " + path("bad") + " --size 48").code == 2);
}

TEST_CASE("train, eval and predict pipeline") {
  ensure_dataset();
  const Run t = fsgnet("train --data " + path("d") + " --out " + path("m.fsg") + kTinyModel + " --seed 3");
  REQUIRE(t.code == 0);
  CHECK(fs::exists(path("m.fsg")));
  CHECK(fs::exists(path("m.fsg.history.tsv")));

  const Run e = fsgnet("eval --data " + path("d") + " --ckpt " + path("m.fsg"));
  REQUIRE(e.code == 0);
  for (const char* key : {"precision", "recall", "f1", "iou", "oa"}) CHECK(e.out.find(key) != std::string::npos);
  CHECK(fs::exists(root() / "m.fsg.render" / "s00006_cmp.png"));

  const std::string a = path("d/test/s00006_A.png"), b = path("d/test/s00006_B.png");
  const Run p = fsgnet("predict --ckpt " + path("m.fsg") + " --a " + a + " --b " + b + " --out " + path("p.png") +
                       " --patch 32 --label " + path("d/test/s00006_label.png"));
  REQUIRE(p.code == 0);
  CHECK(fsg::load_mask(path("p.png")).height == 32);
  CHECK(fs::exists(path("p.png.cmp.png")));

  CHECK(fsgnet("eval --data " + path("d") + " --ckpt " + path("d/train/s00000_A.png")).code == 2);
}

TEST_CASE("same seed gives identical checkpoints and histories") {
  ensure_dataset();
  for (const char* name : {"r1.fsg", "r2.fsg"})
    REQUIRE(fsgnet("train --data " + path("d") + " --out " + path(name) + kTinyModel + " --seed 5").code == 0);
  CHECK(slurp(path("r1.fsg")) == slurp(path("r2.fsg")));
  CHECK(slurp(path("r1.fsg.history.tsv")) == slurp(path("r2.fsg.history.tsv")));
}

TEST_CASE("config file values apply and command-line flags win") {
  ensure_dataset();
  {
    std::ofstream cfg(path("t.cfg"));
    cfg << "# toy run\nwidth=0.25\nepochs=3\nbatch=4\nlr-head=0.002\n";
  }
  REQUIRE(fsgnet("train --config " + path("t.cfg") + " --data " + path("d") + " --out " + path("c.fsg") + " --epochs 2")
              .code == 0);
  std::ifstream hist(path("c.fsg.history.tsv"));
  std::string line;
  std::size_t epochs = 0;
  double first_lr = 0.0;
  while (std::getline(hist, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (epochs++ == 0) first_lr = std::stod(line.substr(line.find('\t') + 1));
  }
  CHECK(epochs == 2);
  CHECK(first_lr == 0.002);
  const std::string ckpt = slurp(path("c.fsg"));
  CHECK(ckpt.find("lr-head=0.002") != std::string::npos);
  CHECK(ckpt.find("# toy run") != std::string::npos);
}

TEST_CASE("ablate writes a table and records") {
  ensure_dataset();
  const Run r = fsgnet("ablate --data " + path("d") + " --row dawim=full,stsam=full,lgfu=on --row dawim=off,stsam=off,lgfu=off" +
                       kTinyModel + " --out " + path("abl.txt"));
  REQUIRE(r.code == 0);
  const std::string table = slurp(path("abl.txt"));
  CHECK(table.find("dawim=off,stsam=off,lgfu=off") != std::string::npos);
  CHECK(slurp(path("abl.txt.records")).find("config=dawim=full,stsam=full,lgfu=on") != std::string::npos);
  CHECK(fsgnet("ablate --data " + path("d") + " --row dawim=magic" + kTinyModel).code == 2);
}

TEST_CASE("info reports totals alongside the reference figures") {
  const Run r = fsgnet("info --width 0.25 --size 64");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("13.76") != std::string::npos);
  CHECK(r.out.find("6.21") != std::string::npos);
  CHECK(r.out == fsgnet("info --width 0.25 --size 64").out);
}

TEST_CASE("gradcheck exits zero when every module passes") {
  const Run r = fsgnet("gradcheck --seeds 1 --skip-network");
  CHECK(r.code == 0);
  CHECK(r.out.find("dawim") != std::string::npos);
}
