/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// End-to-end checks of the kgln binary: exit codes, outputs, determinism.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path& root() {
  static const fs::path r = [] {
    const fs::path p = fs::path(KGLN_TEST_TMP) / "cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

Result kgln(const std::string& args) {
  const fs::path out = root() / "stdout.txt", err = root() / "stderr.txt";
  const std::string cmd = "cd '" + root().string() + "' && '" KGLN_CLI_PATH "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

constexpr const char* kTrainFlags = "--set d=4 --set K=2 --set H=1 --set max_epochs=2 --set batch_size=64 -q";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(kgln("synth --out syn --users 40 --items 60 --relations 3 --values 6 --seed 3 -q").code, 0);
    ASSERT_EQ(kgln("prepare --ratings syn/ratings.dat --format movielens --kg syn/kg.tsv --item-map syn/item_map.tsv "
                   "--out ds --seed 1 -q")
                  .code,
              0);
    ASSERT_EQ(kgln(std::string("train --data ds --out tr --runs 1 --seed 7 ") + kTrainFlags).code, 0);
  }
};

TEST_F(Cli, PrepareWritesDatasetAndManifest) {
  for (const char* f : {"interactions.tsv", "users.tsv", "items.tsv", "kg.tsv", "drop_report.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(root() / "ds" / f)) << f;
  EXPECT_EQ(lines(slurp(root() / "ds" / "interactions.tsv"))[0], "user_id\titem_id\tlabel\tsplit");
  const auto manifest = slurp(root() / "ds" / "manifest.json");
  EXPECT_NE(manifest.find("\"command\": \"prepare\""), std::string::npos);
  EXPECT_NE(manifest.find("syn/ratings.dat"), std::string::npos);
}

TEST_F(Cli, PrepareIsDeterministic) {
  ASSERT_EQ(kgln("prepare --ratings syn/ratings.dat --format movielens --kg syn/kg.tsv --item-map syn/item_map.tsv "
                 "--out ds_again --seed 1 -q")
                .code,
            0);
  for (const char* f : {"interactions.tsv", "users.tsv", "items.tsv", "kg.tsv", "drop_report.json"})
    EXPECT_EQ(slurp(root() / "ds" / f), slurp(root() / "ds_again" / f)) << f;
  ASSERT_EQ(kgln("prepare --ratings syn/ratings.dat --format movielens --kg syn/kg.tsv --item-map syn/item_map.tsv "
                 "--out ds_other --seed 2 -q")
                .code,
            0);
  EXPECT_NE(slurp(root() / "ds" / "interactions.tsv"), slurp(root() / "ds_other" / "interactions.tsv"));
}

TEST_F(Cli, PrepareErrors) {
  const auto missing = kgln("prepare --ratings syn/ratings.dat --kg nope.tsv --item-map syn/item_map.tsv --out x -q");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("nope.tsv"), std::string::npos);
  std::ofstream(root() / "empty.dat").close();
  EXPECT_EQ(kgln("prepare --ratings empty.dat --kg syn/kg.tsv --item-map syn/item_map.tsv --out x -q").code, 3);
  EXPECT_EQ(kgln("prepare --ratings syn/ratings.dat --format csv --kg syn/kg.tsv --item-map syn/item_map.tsv --out x").code,
            2);
  EXPECT_EQ(kgln("prepare --kg syn/kg.tsv").code, 2);
  EXPECT_EQ(kgln("").code, 2);
  EXPECT_EQ(kgln("frobnicate").code, 2);
}

TEST_F(Cli, TrainSingleRun) {
  const auto files = lines(slurp(root() / "tr" / "summary.csv"));
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0], "metric,mean,std,runs");
  EXPECT_EQ(files[1].substr(files[1].find(',', 4)), ",0,1");
  EXPECT_TRUE(fs::exists(root() / "tr" / "checkpoint_seed7.kgcp"));
  EXPECT_TRUE(fs::exists(root() / "tr" / "train_report_seed7.csv"));
  EXPECT_EQ(lines(slurp(root() / "tr" / "train_report_seed7.csv"))[0], "epoch,train_loss,val_auc,val_f1");
  EXPECT_EQ(lines(slurp(root() / "tr" / "metrics.csv")).size(), 2u);
}

TEST_F(Cli, TrainFiveSeeds) {
  ASSERT_EQ(kgln(std::string("train --data ds --out tr5 --runs 5 --seed 20 ") + kTrainFlags).code, 0);
  const auto manifest = slurp(root() / "tr5" / "manifest.json");
  for (int s = 20; s < 25; ++s) {
    EXPECT_TRUE(fs::exists(root() / "tr5" / ("checkpoint_seed" + std::to_string(s) + ".kgcp")));
    EXPECT_NE(manifest.find("\"seed\": " + std::to_string(s)), std::string::npos);
  }
  EXPECT_EQ(lines(slurp(root() / "tr5" / "metrics.csv")).size(), 6u);
}

TEST_F(Cli, TrainConfigErrors) {
  std::ofstream(root() / "bad.cfg") << "d = 8\nfoo = 1\n";
  const auto r = kgln("train --data ds --out trx --config bad.cfg -q");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("foo"), std::string::npos);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
  EXPECT_EQ(kgln("train --data ds --out trx --set foo=1 -q").code, 2);
  EXPECT_EQ(kgln("train --data nowhere --out trx -q").code, 2);
  EXPECT_FALSE(fs::exists(root() / "trx" / "manifest.json"));
}

TEST_F(Cli, ConfigPrecedenceRecordedInManifest) {
  std::ofstream(root() / "prec.cfg") << "d = 6\nK = 3\nH = 1\nmax_epochs = 1\n";
  ASSERT_EQ(kgln("train --data ds --out trp --runs 1 --config prec.cfg --set K=2 -q").code, 0);
  const auto cfg = slurp(root() / "trp" / "config.cfg");
  EXPECT_NE(cfg.find("d = 6\n"), std::string::npos);
  EXPECT_NE(cfg.find("K = 2\n"), std::string::npos);
  const auto manifest = slurp(root() / "trp" / "manifest.json");
  const std::regex d_src(R"re("d": \{\s*"value": "6",\s*"source": "file")re");
  const std::regex k_src(R"re("K": \{\s*"value": "2",\s*"source": "flag")re");
  const std::regex lr_src(R"re("lr": \{\s*"value": "0.01",\s*"source": "default")re");
  EXPECT_TRUE(std::regex_search(manifest, d_src));
  EXPECT_TRUE(std::regex_search(manifest, k_src));
  EXPECT_TRUE(std::regex_search(manifest, lr_src));
}

TEST_F(Cli, EvalPrintsMetricsAndRepeats) {
  const auto a = kgln("eval --data ds --checkpoint tr/checkpoint_seed7.kgcp --split test --out ev1");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_TRUE(std::regex_match(a.out, std::regex(R"(auc=[0-9.e-]+ f1=[0-9.e-]+\n)"))) << a.out;
  const auto b = kgln("eval --data ds --checkpoint tr/checkpoint_seed7.kgcp --split test --out ev2");
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(root() / "ev1" / "metrics.csv"), slurp(root() / "ev2" / "metrics.csv"));
  // The same frozen fields as the test score recorded by train.
  EXPECT_EQ(lines(slurp(root() / "ev1" / "metrics.csv"))[1], lines(slurp(root() / "tr" / "metrics.csv"))[1].replace(0, 2, "ds"));
  EXPECT_EQ(kgln("eval --data ds --checkpoint tr/checkpoint_seed7.kgcp --split val --out ev3").code, 0);
  EXPECT_EQ(kgln("eval --data ds --checkpoint tr/checkpoint_seed7.kgcp --split train").code, 2);
}

TEST_F(Cli, EvalShapeMismatch) {
  std::ofstream(root() / "wide.cfg") << "d = 16\nK = 2\nH = 1\n";
  const auto r = kgln("eval --data ds --checkpoint tr/checkpoint_seed7.kgcp --config wide.cfg --out evx");
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("expected 40x16, found 40x4"), std::string::npos) << r.err;
  EXPECT_EQ(kgln("eval --data ds --checkpoint missing.kgcp").code, 2);
}

TEST_F(Cli, SweepCounts) {
  ASSERT_EQ(kgln(std::string("sweep --data ds --axes 'H=1,2,3' --out sw1 --runs 1 ") + kTrainFlags).code, 0);
  EXPECT_EQ(lines(slurp(root() / "sw1" / "ablation.csv")).size(), 4u);
  EXPECT_EQ(lines(slurp(root() / "sw1" / "depth_table.csv")).size(), 4u);
  ASSERT_EQ(kgln(std::string("sweep --data ds --axes 'aggregator=gcn,graphsage,bi;attention=influence,mean' --out sw2 "
                             "--runs 1 ") +
                 kTrainFlags)
                .code,
            0);
  EXPECT_EQ(lines(slurp(root() / "sw2" / "ablation.csv")).size(), 7u);
  EXPECT_EQ(lines(slurp(root() / "sw2" / "attention_table.csv")).size(), 4u);
  EXPECT_EQ(kgln("sweep --data ds --axes '' --out sw3").code, 2);
  EXPECT_EQ(kgln("sweep --data ds --axes 'depth=1,2' --out sw3").code, 2);
}

TEST_F(Cli, CompleteKg) {
  const auto same = kgln("complete-kg --kg syn/kg.tsv --out ck0 --dim 8 --epochs 5 --max-added 0 -q");
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_EQ(slurp(root() / "ck0" / "kg.tsv"), slurp(root() / "syn" / "kg.tsv"));

  ASSERT_EQ(kgln("complete-kg --kg syn/kg.tsv --out ck1 --dim 8 --epochs 5 --threshold -10 --max-added 25 -q").code, 0);
  const auto report = lines(slurp(root() / "ck1" / "completion_report.tsv"));
  ASSERT_EQ(report.size(), 26u);
  double prev = 0.0;
  for (std::size_t i = 1; i < report.size(); ++i) {
    const double s = std::stod(report[i].substr(report[i].rfind('\t') + 1));
    if (i > 1) {
      EXPECT_LE(s, prev);
    }
    prev = s;
  }
  EXPECT_EQ(lines(slurp(root() / "ck1" / "kg.tsv")).size(), lines(slurp(root() / "syn" / "kg.tsv")).size() + 25);

  std::ofstream(root() / "empty_kg.tsv").close();
  EXPECT_EQ(kgln("complete-kg --kg empty_kg.tsv --out ck2 -q").code, 3);
  EXPECT_EQ(kgln("complete-kg --kg syn/kg.tsv --out ck2 --threshold 0.5 -q").code, 2);
}

TEST_F(Cli, Recommend) {
  const auto one = kgln("recommend --data ds --checkpoint tr/checkpoint_seed7.kgcp --user u3 --top-k 1");
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_EQ(lines(one.out).size(), 1u);
  const auto many = kgln("recommend --data ds --checkpoint tr/checkpoint_seed7.kgcp --user u3 --top-k 10");
  const auto rows = lines(many.out);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], lines(one.out)[0]);
  double prev = 2.0;
  for (const auto& r : rows) {
    const double s = std::stod(r.substr(r.find('\t') + 1));
    EXPECT_LE(s, prev);
    prev = s;
  }
  EXPECT_EQ(kgln("recommend --data ds --checkpoint tr/checkpoint_seed7.kgcp --user 999999 --top-k 3").code, 5);
}

TEST_F(Cli, RerunFromManifestIsByteIdentical) {
  for (const char* dir : {"ds", "tr"}) {
    const std::string copy = std::string(dir) + "_rerun";
    const auto r = kgln("rerun --manifest " + std::string(dir) + "/manifest.json --out " + copy + " -q");
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(root() / dir)) {
      if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
      EXPECT_EQ(slurp(e.path()), slurp(root() / copy / e.path().filename())) << e.path();
      ++compared;
    }
    EXPECT_GT(compared, 3u);
  }
  const auto again = kgln("rerun --manifest tr/manifest.json --out tr_rerun2 -q");
  EXPECT_EQ(again.out, kgln("rerun --manifest tr/manifest.json --out tr_rerun3 -q").out);
}

TEST_F(Cli, RerunDetectsChangedInput) {
  fs::copy(root() / "syn", root() / "syn_copy", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  ASSERT_EQ(kgln("prepare --ratings syn_copy/ratings.dat --kg syn_copy/kg.tsv --item-map syn_copy/item_map.tsv --out dsc -q")
                .code,
            0);
  std::ofstream(root() / "syn_copy" / "ratings.dat", std::ios::app) << "u0::i1::5::1\n";
  EXPECT_EQ(kgln("rerun --manifest dsc/manifest.json --out dsc2 -q").code, 2);
}

}  // namespace
