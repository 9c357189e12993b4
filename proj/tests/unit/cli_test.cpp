// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "selafd/checkpoint.hpp"

namespace selafd::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool contains(const std::string& text, const std::string& needle) { return text.find(needle) != std::string::npos; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("selafd_cli_test_" + std::to_string(getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    corpus_ = (root_ / "corpus").string();
    ASSERT_EQ(run_cli({"synth", "--out", corpus_, "--per-class", "3", "--seed", "4"}).code, kExitOk);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string dir(const std::string& name) { return (root_ / name).string(); }

  static inline fs::path root_;
  static inline std::string corpus_;
};

TEST_F(Cli, DefaultConfigEcho) {
  unsetenv("SELAFD_SEED");
  const Result r = run_cli({"config"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* line : {"train.lr=0.0001\n", "train.batch_size=128\n", "train.epochs=200\n",
                           "peft.parallel_scale=0.2\n", "peft.bottleneck_ratio=0.5\n", "model.preset=vit_b16\n",
                           "seed=0 (default)\n"})
    EXPECT_TRUE(contains(r.out, line)) << line;
}

TEST_F(Cli, FlagBeatsFileBeatsDefault) {
  const std::string cfg = dir("prec.cfg");
  std::ofstream(cfg) << "seed = 5\n[train]\nlr = 0.01\nepochs = 7\n[model]\nembed_dim = 192\n";
  Result r = run_cli({"config", "--config", cfg});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "train.lr=0.01\n"));
  EXPECT_TRUE(contains(r.out, "train.epochs=7\n"));
  EXPECT_TRUE(contains(r.out, "model.embed_dim=192\n"));
  EXPECT_TRUE(contains(r.out, "seed=5 (config)\n"));
  r = run_cli({"config", "--config", cfg, "--lr", "0.02", "--tiny", "--seed", "6"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "train.lr=0.02\n"));
  EXPECT_TRUE(contains(r.out, "train.epochs=7\n"));
  EXPECT_TRUE(contains(r.out, "model.embed_dim=64\n"));
  EXPECT_TRUE(contains(r.out, "seed=6 (flag)\n"));
}

TEST_F(Cli, EnvironmentSeedIsTheFallback) {
  setenv("SELAFD_SEED", "42", 1);
  EXPECT_TRUE(contains(run_cli({"config"}).out, "seed=42 (env)\n"));
  EXPECT_TRUE(contains(run_cli({"config", "--seed", "3"}).out, "seed=3 (flag)\n"));
  setenv("SELAFD_SEED", "abc", 1);
  EXPECT_EQ(run_cli({"config"}).code, kExitUsage);
  unsetenv("SELAFD_SEED");
}

TEST_F(Cli, ConfigErrors) {
  const std::string cfg = dir("bad.cfg");
  std::ofstream(cfg) << "[train]\nlearning_rate = 0.1\n";
  Result r = run_cli({"config", "--config", cfg});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(contains(r.err, "train.learning_rate"));
  std::ofstream(cfg) << "[peft]\nparallel_scale = 1.5\n";
  EXPECT_EQ(run_cli({"config", "--config", cfg}).code, kExitUsage);
  EXPECT_EQ(run_cli({"config", "--lr", "-1"}).code, kExitUsage);
  EXPECT_EQ(run_cli({"nonsense"}).code, kExitUsage);
  EXPECT_EQ(run_cli({}).code, kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, kExitOk);
}

TEST_F(Cli, SynthCountsDeterminismAndErrors) {
  EXPECT_EQ(run_cli({"synth", "--out", dir("zero"), "--per-class", "0"}).code, kExitUsage);
  const std::string a = dir("synth_a"), b = dir("synth_b");
  ASSERT_EQ(run_cli({"synth", "--out", a, "--per-class", "2", "--seed", "9"}).code, kExitOk);
  ASSERT_EQ(run_cli({"synth", "--out", b, "--per-class", "2", "--seed", "9"}).code, kExitOk);
  std::size_t recordings = 0;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".rec") {
      ++recordings;
      EXPECT_EQ(slurp(e.path()), slurp(fs::path(b) / e.path().filename()));
    }
  EXPECT_EQ(recordings, 12u);
  const std::string manifest = slurp(fs::path(a) / kManifestName);
  EXPECT_TRUE(contains(manifest, "command=synth\n"));
  EXPECT_TRUE(contains(manifest, "output.falling_1.rec="));
  EXPECT_EQ(manifest, slurp(fs::path(b) / kManifestName));

  const std::string blocker = dir("plain_file");
  std::ofstream(blocker) << "x";
  EXPECT_EQ(run_cli({"synth", "--out", blocker + "/corpus"}).code, kExitIo);
}

TEST_F(Cli, SpectrogramWritesOneMapPerRecording) {
  const std::string out = dir("spec");
  ASSERT_EQ(run_cli({"spectrogram", "--corpus", corpus_, "--out", out}).code, kExitOk);
  const TensorContainer c = TensorContainer::read((fs::path(out) / "falling_0.td").string());
  EXPECT_EQ(c.require("td").dim(0), 64u);
  EXPECT_EQ(c.require_meta("label"), "falling");
  EXPECT_TRUE(fs::exists(fs::path(out) / "walking_2.pgm"));
  EXPECT_EQ(run_cli({"spectrogram", "--corpus", corpus_, "--out", corpus_}).code, kExitUsage);
  EXPECT_EQ(run_cli({"spectrogram", "--corpus", dir("missing"), "--out", dir("spec2")}).code, kExitIo);
}

TEST_F(Cli, TrainModesAndMissingConfig) {
  Result r = run_cli({"train", "--corpus", corpus_, "--mode", "lora", "--out", dir("t0")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(contains(r.err, "selafd, lora_only, adapter_only, linear, full"));

  const std::string out = dir("train");
  r = run_cli({"train", "--corpus", corpus_, "--mode", "selafd", "--tiny", "--epochs", "2", "--batch-size", "4",
               "--lr", "0.001", "--config", dir("absent.cfg"), "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"model.ckpt", "best.ckpt", "train_log.txt", "report.txt", kManifestName})
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  const std::string manifest = slurp(fs::path(out) / kManifestName);
  EXPECT_TRUE(contains(manifest, "note=config file " + dir("absent.cfg") + " not found; defaults used\n"));
  EXPECT_TRUE(contains(manifest, "config.train.mode=selafd\n"));
  EXPECT_TRUE(contains(manifest, "input.corpus.hash="));
  const std::string log = slurp(fs::path(out) / "train_log.txt");
  EXPECT_TRUE(contains(log, "# lr=0.001\n"));

  const TensorContainer c = TensorContainer::read((fs::path(out) / "model.ckpt").string());
  EXPECT_EQ(c.require_meta("mode"), "selafd");
  EXPECT_EQ(c.require_meta("data.split_ratio"), "0.8");
}

TEST_F(Cli, NonFiniteLossExitsWithNumericalCode) {
  const Result r = run_cli({"train", "--corpus", corpus_, "--mode", "full", "--tiny", "--epochs", "3", "--lr",
                            "1e308", "--batch-size", "2", "--out", dir("nan")});
  EXPECT_EQ(r.code, kExitNumerical);
  EXPECT_TRUE(contains(r.err, "non-finite loss at epoch"));
}

TEST_F(Cli, EvalIsIdempotentAndExportCountsMaps) {
  const std::string trained = dir("train_for_eval");
  ASSERT_EQ(run_cli({"train", "--corpus", corpus_, "--mode", "linear", "--tiny", "--epochs", "1", "--out", trained})
                .code,
            kExitOk);
  const std::string ckpt = (fs::path(trained) / "model.ckpt").string();
  ASSERT_EQ(run_cli({"eval", "--checkpoint", ckpt, "--corpus", corpus_, "--out", dir("eval1")}).code, kExitOk);
  ASSERT_EQ(run_cli({"eval", "--checkpoint", ckpt, "--corpus", corpus_, "--out", dir("eval2")}).code, kExitOk);
  const std::string report = slurp(fs::path(dir("eval1")) / "report.txt");
  EXPECT_EQ(report, slurp(fs::path(dir("eval2")) / "report.txt"));
  EXPECT_EQ(slurp(fs::path(dir("eval1")) / "predictions.csv"), slurp(fs::path(dir("eval2")) / "predictions.csv"));
  // evaluation reproduces the training-time split and numbers
  const std::string at_train = slurp(fs::path(trained) / "report.txt");
  for (const char* key : {"split_hash=", "accuracy=", "test_samples="}) {
    auto line = [&](const std::string& text) {
      const auto at = text.find(std::string("\n") + key);
      return text.substr(at, text.find('\n', at + 1) - at);
    };
    EXPECT_EQ(line(report), line(at_train)) << key;
  }
  EXPECT_FALSE(contains(slurp(fs::path(dir("eval1")) / kManifestName), "differs from the training split"));

  EXPECT_EQ(run_cli({"eval", "--checkpoint", dir("none.ckpt"), "--corpus", corpus_, "--out", dir("eval3")}).code,
            kExitIo);

  const std::string six = dir("six");
  ASSERT_EQ(run_cli({"synth", "--out", six, "--per-class", "1"}).code, kExitOk);
  const std::string maps = dir("attn");
  ASSERT_EQ(run_cli({"export-attn", "--checkpoint", ckpt, "--corpus", six, "--out", maps}).code, kExitOk);
  std::size_t pgm = 0;
  for (const auto& e : fs::directory_iterator(maps)) pgm += e.path().extension() == ".pgm";
  EXPECT_EQ(pgm, 6u);
  EXPECT_EQ(run_cli({"export-attn", "--checkpoint", ckpt, "--corpus", six, "--out", maps, "--layer", "9"}).code,
            kExitUsage);
}

TEST_F(Cli, AblateWritesFiveRowsReproducibly) {
  const std::vector<std::string> base{"ablate", "--corpus", corpus_, "--tiny", "--epochs", "1", "--batch-size", "4",
                                      "--lr", "0.001", "--out"};
  auto with_out = [&](const std::string& out) {
    auto a = base;
    a.push_back(out);
    return a;
  };
  ASSERT_EQ(run_cli(with_out(dir("ab1"))).code, kExitOk);
  ASSERT_EQ(run_cli(with_out(dir("ab2"))).code, kExitOk);
  const std::string table = slurp(fs::path(dir("ab1")) / "ablation.txt");
  EXPECT_TRUE(contains(table, "rows=5\n"));
  for (const char* m : {"selafd", "lora_only", "adapter_only", "linear", "full"}) {
    EXPECT_TRUE(contains(table, std::string("[mode.") + m + "]"));
    EXPECT_TRUE(fs::exists(fs::path(dir("ab1")) / (std::string("report_") + m + ".txt")));
  }
  EXPECT_EQ(table, slurp(fs::path(dir("ab2")) / "ablation.txt"));
  EXPECT_EQ(slurp(fs::path(dir("ab1")) / "model_selafd.ckpt"), slurp(fs::path(dir("ab2")) / "model_selafd.ckpt"));
  EXPECT_EQ(run_cli({"ablate", "--corpus", corpus_, "--modes", "selafd,bogus", "--out", dir("ab3")}).code,
            kExitUsage);
}

}  // namespace
}  // namespace selafd::cli
