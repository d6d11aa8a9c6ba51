#include <doctest.h>

#include "ent/data.hpp"
#include "ent/decode.hpp"
#include "ent/experiment.hpp"
#include "test_util.hpp"

using namespace ent;

namespace {

ModelConfig small_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.feature_dim = 3;
  c.hidden_dim = 4;
  c.vocab_size = 3;
  c.emotion_count = 3;
  c.seed = 5;
  c.max_symbols_per_frame = 4;
  return c;
}

void zero_all(EmotionTransducer& model) {
  for (Parameter* p : model.parameters()) p->value.setZero();
}

Matrix features(std::uint64_t seed, Index frames) {
  Rng rng(seed);
  return test_util::random_matrix(rng, frames, 3);
}

}  // namespace

TEST_CASE("zero-weight model emits only blanks") {
  for (Variant v : {Variant::Ent, Variant::Fent}) {
    EmotionTransducer model(small_config(v));
    zero_all(model);
    const DecodeResult r = greedy_decode(model, features(1, 6));
    CHECK(r.tokens.empty());
    CHECK(r.events.size() == 6);
    CHECK(r.frame_emotions == std::vector<int>(6, 0));
    CHECK_FALSE(r.forced_blank);
    for (std::size_t t = 0; t < r.events.size(); ++t) {
      CHECK(r.events[t].frame == static_cast<Index>(t));
      CHECK(r.events[t].tokens_so_far == 0);
    }
  }
}

TEST_CASE("a dominant blank logit suppresses all tokens in FENT") {
  EmotionTransducer model(small_config(Variant::Fent));
  model.blank_joint.linear().bias.value(0) = 1e6;
  const DecodeResult r = greedy_decode(model, features(2, 5));
  CHECK(r.tokens.empty());
  CHECK(r.frame_emotions.size() == 5);
}

TEST_CASE("symbol cap forces a blank") {
  ModelConfig cfg = small_config(Variant::Ent);
  cfg.max_symbols_per_frame = 3;
  EmotionTransducer model(cfg);
  zero_all(model);
  model.vocab_joint.linear().bias.value(2) = 50.0;
  const DecodeResult r = greedy_decode(model, features(3, 4));
  CHECK(r.forced_blank);
  CHECK(r.tokens.size() == 12);
  CHECK(r.tokens == std::vector<int>(12, 2));
  CHECK(r.events.size() == 4);
  CHECK(r.events.back().tokens_so_far == 12);
}

TEST_CASE("emitted tokens never exceed the cap") {
  Rng rng(4);
  for (Variant v : {Variant::Ent, Variant::Fent}) {
    for (int trial = 0; trial < 20; ++trial) {
      ModelConfig cfg = small_config(v);
      cfg.seed = rng.next_u64();
      EmotionTransducer model(cfg);
      for (Parameter* p : model.parameters()) p->value *= 8.0;
      const Index T = 1 + static_cast<Index>(rng.below(6));
      const DecodeResult r = greedy_decode(model, features(rng.next_u64(), T));
      CHECK(static_cast<Index>(r.tokens.size()) <= T * cfg.max_symbols_per_frame);
      CHECK(static_cast<Index>(r.frame_emotions.size()) == T);
      CHECK(static_cast<Index>(r.events.size()) == T);
    }
  }
}

TEST_CASE("argmax ties go to blank, then to the lowest token") {
  EmotionTransducer model(small_config(Variant::Ent));
  zero_all(model);
  model.vocab_joint.linear().bias.value << 0.0, 1.0, 1.0, 0.5;
  ModelConfig cfg = small_config(Variant::Ent);
  const DecodeResult r = greedy_decode(model, features(5, 1));
  CHECK(r.tokens == std::vector<int>(static_cast<std::size_t>(cfg.max_symbols_per_frame), 1));
}

TEST_CASE("frame emotions match the lattice node at the traversed position") {
  Rng rng(6);
  for (Variant v : {Variant::Ent, Variant::Fent}) {
    for (int trial = 0; trial < 10; ++trial) {
      ModelConfig cfg = small_config(v);
      cfg.seed = rng.next_u64();
      EmotionTransducer model(cfg);
      // Bias towards emitting some tokens so u moves.
      for (Parameter* p : model.parameters()) p->value *= 3.0;
      const Matrix x = features(rng.next_u64(), 5);
      const DecodeResult r = greedy_decode(model, x);
      const ForwardOutputs out = model.forward(x, r.tokens);
      for (const BlankEvent& e : r.events) {
        Index best = 0;
        out.emotion.log_probs().row(out.emotion.node(e.frame, e.tokens_so_far)).maxCoeff(&best);
        CHECK(e.emotion == static_cast<int>(best));
        CHECK(r.frame_emotions[static_cast<std::size_t>(e.frame)] == e.emotion);
      }
    }
  }
}

TEST_CASE("FENT reads emotion from the blank predictor only") {
  Rng rng(7);
  ModelConfig cfg = small_config(Variant::Fent);
  EmotionTransducer model(cfg);
  for (Parameter* p : model.parameters()) p->value *= 3.0;
  const DecodeResult r = greedy_decode(model, features(8, 6));
  const auto emitted = static_cast<std::int64_t>(r.tokens.size());
  const DecodeCounters& n = r.counters;
  CHECK(n.emotion_joint_evals == 6);
  CHECK(n.emotion_from_blank_predictor == 6);
  CHECK(n.blank_predictor_steps == 1 + emitted);
  CHECK(n.vocab_predictor_steps == 1 + emitted);
  CHECK(n.blank_joint_evals == n.vocab_joint_evals);

  ModelConfig ent_cfg = small_config(Variant::Ent);
  EmotionTransducer ent(ent_cfg);
  const DecodeResult re = greedy_decode(ent, features(8, 6));
  CHECK(re.counters.blank_predictor_steps == 0);
  CHECK(re.counters.blank_joint_evals == 0);
  CHECK(re.counters.emotion_from_blank_predictor == 0);
  CHECK(re.counters.emotion_joint_evals == 6);
}

TEST_CASE("frames_to_segments") {
  const int n = 0, a = 1;
  const std::vector<int> track{n, n, a, a, a, n};
  CHECK(frames_to_segments(track, 1) == SegmentList{{0, 2, n}, {2, 5, a}, {5, 6, n}});
  CHECK(frames_to_segments(std::vector<int>(7, n), 1) == SegmentList{{0, 7, n}});
  CHECK(frames_to_segments(std::vector<int>{n, a, n, n}, 2) == SegmentList{{0, 4, n}});
  // The first run is kept even when short.
  CHECK(frames_to_segments(std::vector<int>{a, n, n, n}, 2) == SegmentList{{0, 1, a}, {1, 4, n}});
  CHECK_THROWS_AS(frames_to_segments(std::vector<int>{}, 1), ArgumentError);
  CHECK_THROWS_AS(frames_to_segments(track, 0), ArgumentError);
}

TEST_CASE("segments partition the track with no equal neighbours") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> track(1 + rng.below(30));
    for (int& e : track) e = static_cast<int>(rng.below(3));
    const SegmentList segs = frames_to_segments(track, 1);
    Index cursor = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].start_frame == cursor);
      CHECK(segs[i].end_frame > segs[i].start_frame);
      if (i > 0) CHECK(segs[i].label != segs[i - 1].label);
      cursor = segs[i].end_frame;
    }
    CHECK(cursor == static_cast<Index>(track.size()));
    CHECK(segments_to_frames(segs, cursor, -1) == track);
  }
}

TEST_CASE("decoding recovers transcripts after training") {
  SyntheticTaskConfig task;
  task.vocabulary = "abcd ";
  task.emotion_count = 3;
  task.feature_dim = 8;
  task.max_words = 2;
  task.seed = 3;
  const EmotionSet emotions({"neutral", "angry", "sad"}, "neutral");
  const std::vector<Utterance> data = synth_generate(task, 16, emotions);
  const Vocabulary vocab(task.vocabulary);
  std::vector<Example> examples;
  for (const Utterance& u : data) examples.push_back(to_example(u, vocab, 0));

  ModelConfig cfg;
  cfg.variant = Variant::Fent;
  cfg.feature_dim = 8;
  cfg.hidden_dim = 24;
  cfg.vocab_size = vocab.size();
  cfg.emotion_count = 3;
  cfg.optimizer.lr = 0.01;
  cfg.seed = 1;
  EmotionTransducer model(cfg);
  AdamState adam = AdamState::for_parameters(model.parameters(), cfg.optimizer);
  TrainOptions opts;
  opts.epochs = 150;
  opts.batch_size = 4;
  train(model, adam, examples, opts);

  std::size_t exact = 0;
  for (const Utterance& u : data) {
    if (vocab.detokenize(greedy_decode(model, u.features).tokens) == u.transcript) ++exact;
  }
  CHECK(static_cast<double>(exact) >= 0.95 * static_cast<double>(data.size()));
}
