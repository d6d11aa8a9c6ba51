#include "ent/decode.hpp"

namespace ent {

namespace {

int argmax_first(const RowVector& scores) {
  int best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

DecodeResult greedy_decode(const EmotionTransducer& model, const Matrix& features) {
  const ModelConfig& cfg = model.config();
  const bool fent = model.factorized();
  const Matrix encoder = model.encoder.forward_sequence(features);

  DecodeResult result;
  DecodeCounters& n = result.counters;

  auto advance = [](const Embedding& emb, const Lstm& lstm, int id, const LstmState& state) {
    const int ids[1] = {id};
    return lstm.step(emb.forward(ids).row(0), state);
  };

  LstmState vocab_state = advance(model.vocab_embedding, model.vocab_predictor, kBlankId,
                                  model.vocab_predictor.zero_state());
  ++n.vocab_predictor_steps;
  LstmState blank_state;
  if (fent) {
    blank_state = advance(model.blank_embedding, model.blank_predictor, kBlankId,
                          model.blank_predictor.zero_state());
    ++n.blank_predictor_steps;
  }

  Index emitted = 0;
  for (Index t = 0; t < encoder.rows(); ++t) {
    const RowVector h_t = encoder.row(t);
    int symbols = 0;
    while (true) {
      RowVector logits;
      if (fent) {
        logits.resize(1 + cfg.vocab_size);
        logits(0) = model.blank_joint.forward_node(h_t, blank_state.h)(0);
        logits.tail(cfg.vocab_size) = model.vocab_joint.forward_node(h_t, vocab_state.h);
        ++n.blank_joint_evals;
      } else {
        logits = model.vocab_joint.forward_node(h_t, vocab_state.h);
      }
      ++n.vocab_joint_evals;
      const int best = argmax_first(logits);
      if (best == kBlankId) break;
      if (symbols == cfg.max_symbols_per_frame) {
        result.forced_blank = true;
        break;
      }
      result.tokens.push_back(best);
      ++symbols;
      ++emitted;
      vocab_state = advance(model.vocab_embedding, model.vocab_predictor, best, vocab_state);
      ++n.vocab_predictor_steps;
      if (fent) {
        blank_state = advance(model.blank_embedding, model.blank_predictor, best, blank_state);
        ++n.blank_predictor_steps;
      }
    }
    const RowVector& g = fent ? blank_state.h : vocab_state.h;
    const int emotion = argmax_first(model.emotion_joint.forward_node(h_t, g));
    ++n.emotion_joint_evals;
    if (fent) ++n.emotion_from_blank_predictor;
    result.frame_emotions.push_back(emotion);
    result.events.push_back({t, emitted, emotion});
  }
  return result;
}

SegmentList frames_to_segments(std::span<const int> frame_emotions, Index min_run) {
  if (frame_emotions.empty()) throw ArgumentError("frames_to_segments: empty emotion track");
  if (min_run < 1) throw ArgumentError("frames_to_segments: min_run must be >= 1");
  SegmentList out;
  const Index total = static_cast<Index>(frame_emotions.size());
  Index start = 0;
  while (start < total) {
    Index end = start + 1;
    while (end < total && frame_emotions[static_cast<std::size_t>(end)] ==
                              frame_emotions[static_cast<std::size_t>(start)]) {
      ++end;
    }
    const int label = frame_emotions[static_cast<std::size_t>(start)];
    if (!out.empty() && (end - start < min_run || out.back().label == label)) {
      out.back().end_frame = end;
    } else {
      out.push_back({start, end, label});
    }
    start = end;
  }
  return out;
}

}  // namespace ent
