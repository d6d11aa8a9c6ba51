#pragma once

#include <span>
#include <vector>

#include "ent/model.hpp"
#include "ent/segments.hpp"

namespace ent {

struct BlankEvent {
  Index frame = 0;
  Index tokens_so_far = 0;
  int emotion = 0;
};

// How often each predictor and head was consulted during a decode.
struct DecodeCounters {
  std::size_t vocab_predictor_steps = 0;
  std::size_t blank_predictor_steps = 0;
  std::size_t vocab_joint_evals = 0;
  std::size_t blank_joint_evals = 0;
  std::size_t emotion_joint_evals = 0;
  // Emotion joint evaluations whose predictor input came from the blank
  // predictor (FENT) rather than the vocabulary predictor (ENT).
  std::size_t emotion_from_blank_predictor = 0;
};

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<int> frame_emotions;  // one per frame
  std::vector<BlankEvent> events;   // one per frame
  bool forced_blank = false;        // symbol cap hit on at least one frame
  DecodeCounters counters;
};

// Greedy transducer decoding. At each frame, tokens are emitted until the
// most probable symbol is blank (ties go to blank, then the lowest id) or
// max_symbols_per_frame tokens have been emitted. When the frame closes,
// the emotion joint is read at the current node.
DecodeResult greedy_decode(const EmotionTransducer& model, const Matrix& features);

// Merges runs of equal labels; runs shorter than `min_run` take the label of
// the preceding segment (the first run is kept as is).
SegmentList frames_to_segments(std::span<const int> frame_emotions, Index min_run = 1);

}  // namespace ent
