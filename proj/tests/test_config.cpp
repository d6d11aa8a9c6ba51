#include <doctest.h>

#include <fstream>

#include "ent/run_config.hpp"
#include "test_util.hpp"

using namespace ent;

TEST_CASE("defaults resolve") {
  const RunConfig rc = load_run_config("", {});
  CHECK(rc.seed == 7);
  CHECK(rc.model.variant == Variant::Ent);
  CHECK(rc.model.vocab_size == rc.vocab.size());
  CHECK(rc.model.emotion_count == 5);
  CHECK(rc.model.lattice_loss == LatticeLossKind::MaxPool);
  CHECK(rc.model.optimizer.lr == 0.003);
  CHECK(rc.train.max_steps == 2000);
  CHECK(rc.gradcheck.tolerance == 1e-4);
  CHECK(rc.synth.task.feature_dim == rc.model.feature_dim);
}

TEST_CASE("dotted overrides") {
  const std::vector<std::string> overrides{"model.hidden_dim=32", "model.variant=FENT",
                                           "model.lattice_loss=region", "optimizer.lr=0.01",
                                           "train.mix_count=40", "vocab=abc "};
  const RunConfig rc = load_run_config("", overrides);
  CHECK(rc.model.hidden_dim == 32);
  CHECK(rc.model.variant == Variant::Fent);
  CHECK(rc.model.lattice_loss == LatticeLossKind::Region);
  CHECK(rc.model.optimizer.lr == 0.01);
  CHECK(rc.mix_count == 40);
  CHECK(rc.model.vocab_size == 4);
  // Integers are accepted where floats are expected.
  CHECK(load_run_config("", std::vector<std::string>{"optimizer.lr=1"}).model.optimizer.lr == 1.0);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  auto load = [](const std::string& o) { return load_run_config("", std::vector<std::string>{o}); };
  CHECK_THROWS_AS(load("model.hiden_dim=3"), ArgumentError);
  CHECK_THROWS_AS(load("nothing=1"), ArgumentError);
  CHECK_THROWS_AS(load("model.hidden_dim=wide"), ArgumentError);
  CHECK_THROWS_AS(load("model.hidden_dim=1.5"), ArgumentError);
  CHECK_THROWS_AS(load("model=3"), ArgumentError);
  CHECK_THROWS_AS(load("model.variant=XYZ"), ArgumentError);
  CHECK_THROWS_AS(load("model.lattice_loss=avg"), ArgumentError);
  CHECK_THROWS_AS(load("train.batch_size=0"), ArgumentError);
  CHECK_THROWS_AS(load("no_equals_sign"), ArgumentError);
  CHECK_THROWS_AS(load("=3"), ArgumentError);
  CHECK_THROWS_AS(load("neutral=joy"), ArgumentError);
}

TEST_CASE("seed flag wins over file and overrides") {
  test_util::TempDir dir("cfg");
  {
    std::ofstream out(dir.file("c.json"));
    out << R"({"seed": 3, "model": {"hidden_dim": 12}, "train": {"epochs": 5}})";
  }
  const RunConfig from_file = load_run_config(dir.file("c.json"), {});
  CHECK(from_file.seed == 3);
  CHECK(from_file.model.seed == 3);
  CHECK(from_file.synth.task.seed == 3);
  CHECK(from_file.model.hidden_dim == 12);
  CHECK(from_file.train.epochs == 5);
  CHECK(from_file.model.feature_dim == 16);

  const std::vector<std::string> overrides{"model.hidden_dim=20", "seed=4"};
  const RunConfig layered = load_run_config(dir.file("c.json"), overrides, 9);
  CHECK(layered.model.hidden_dim == 20);
  CHECK(layered.seed == 9);
  CHECK(layered.train.shuffle_seed == 9);
}

TEST_CASE("bad config files") {
  test_util::TempDir dir("badcfg");
  {
    std::ofstream out(dir.file("broken.json"));
    out << "{ not json";
  }
  {
    std::ofstream out(dir.file("unknown.json"));
    out << R"({"model": {"depth": 2}})";
  }
  CHECK_THROWS_AS(load_run_config(dir.file("broken.json"), {}), FormatError);
  CHECK_THROWS_AS(load_run_config(dir.file("unknown.json"), {}), ArgumentError);
  CHECK_THROWS_AS(load_run_config(dir.file("absent.json"), {}), ArgumentError);
}
