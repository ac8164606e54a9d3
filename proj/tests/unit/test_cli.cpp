#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "synthetic.hpp"
#include "tempdir.hpp"

using occnet::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// stdout and stderr merged unless the caller redirects.
Run run(const std::string& args, bool merge_stderr = true) {
  const std::string cmd = std::string(OCCNET_CLI) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

}  // namespace

TEST(Cli, CostPrintsExactCountAndRatio) {
  const auto r = run("cost --h 224 --w 224 --din 3 --dout 32 --k 3");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out, "cost=6171648\nD=0.142361\n");
}

TEST(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seed 7 --cells 10");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "PASS max_rel_err=")) << r.out;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("cost --h 1 --w 1 --din 1 --dout 1 --k 1 --bogus").status, 2);
  EXPECT_EQ(run("train --data x").status, 2);
  EXPECT_EQ(run("eval --data x --model y --report xml").status, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  TempDir dir("cli");
  const auto r = run("classify --model " + (dir / "none.ckpt").string() + " --image x.ppm");
  EXPECT_EQ(r.status, 1);
  EXPECT_FALSE(r.out.empty());
}

TEST(Cli, HelpListsFlags) {
  const auto r = run("--help");
  EXPECT_EQ(r.status, 0);
  for (const char* sub : {"train", "eval", "classify", "enroll", "identify", "watch", "augment", "cost", "gradcheck"})
    EXPECT_TRUE(contains(r.out, sub)) << sub;
  const auto w = run("watch --help");
  for (const char* flag : {"--model", "--gallery", "--in", "--log", "--threshold", "--clock"})
    EXPECT_TRUE(contains(w.out, flag)) << flag;
}

TEST(Cli, EndToEndOnFixture) {
  TempDir dir("cli");
  const auto fixture = occnet::synthetic::fixture_root();
  const auto cfg = dir / "short.conf";
  std::ofstream(cfg) << "base_learning_rate = 0.01\nschedule = constant\nbatch_size = 10\noptimizer = adam\nepochs = 2\n";
  const auto model = (dir / "m.ckpt").string();
  const std::string train_args = "train --data " + (fixture / "train").string() + " --config " + cfg.string() + " --seed 3 --model ";

  const auto a = run(train_args + model, false);
  ASSERT_EQ(a.status, 0) << a.out;
  EXPECT_TRUE(a.out.starts_with("epoch,learning_rate,batch_loss,train_loss,train_accuracy\n")) << a.out;
  const auto b = run(train_args + (dir / "m2.ckpt").string(), false);
  EXPECT_EQ(a.out, b.out);
  std::ifstream ca(model, std::ios::binary), cb(dir / "m2.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(ca), {}), std::string(std::istreambuf_iterator<char>(cb), {}));

  const auto ev = run("eval --data " + (fixture / "probe").string() + " --model " + model + " --report csv", false);
  ASSERT_EQ(ev.status, 0) << ev.out;
  EXPECT_TRUE(ev.out.starts_with("Occlusion type,Accuracy,JSI,MCC\n")) << ev.out;

  const auto probe = (fixture / "probe" / "Alice" / "scarf" / "img_00.ppm").string();
  const auto cl = run("classify --model " + model + " --image " + probe);
  ASSERT_EQ(cl.status, 0) << cl.out;
  EXPECT_TRUE(contains(cl.out, "class=")) << cl.out;

  const auto gallery = (dir / "g.gal").string();
  const auto en = run("enroll --model " + model + " --gallery " + gallery + " --data " + (fixture / "train").string() +
                      " --clock '2021-06-25 10:30'");
  ASSERT_EQ(en.status, 0) << en.out;
  EXPECT_TRUE(contains(en.out, "enrolled Alice images=25")) << en.out;

  const auto log = (dir / "log.csv").string();
  const auto id = run("identify --model " + model + " --gallery " + gallery + " --image " + probe +
                      " --threshold 0 --log " + log + " --clock '2021-06-25 10:30'");
  ASSERT_EQ(id.status, 0) << id.out;
  EXPECT_TRUE(contains(id.out, "person=")) << id.out;

  const auto in = dir / "in";
  std::filesystem::create_directories(in);
  std::filesystem::copy_file(probe, in / "a.ppm");
  std::filesystem::copy_file(fixture / "impostor" / "Emeka" / "Face" / "img_00.ppm", in / "b.ppm");
  const auto wa = run("watch --model " + model + " --gallery " + gallery + " --in " + in.string() + " --log " +
                      (dir / "w.csv").string() + " --clock '2021-06-25 10:30'");
  ASSERT_EQ(wa.status, 0) << wa.out;
  EXPECT_TRUE(contains(wa.out, "processed=2 ")) << wa.out;
}

TEST(Cli, AugmentWritesVariants) {
  TempDir dir("cli");
  occnet::synthetic::write_tree(dir.path(), {{occnet::synthetic::enrolled_personas()[0]}, 1, 0, 16});
  const auto r = run("augment --data " + dir.path().string() + " --count 2 --seed 1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "sources=5 written=10")) << r.out;
}
