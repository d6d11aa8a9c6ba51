#pragma once

#include <vector>

#include "ent/numerics.hpp"

namespace ent {

// Frames [start_frame, end_frame) labelled with one emotion id.
struct EmotionSegment {
  Index start_frame = 0;
  Index end_frame = 0;
  int label = 0;

  Index length() const { return end_frame - start_frame; }
  friend bool operator==(const EmotionSegment&, const EmotionSegment&) = default;
};

using SegmentList = std::vector<EmotionSegment>;

// Expands segments into one label per frame; uncovered frames get `fill`.
// Throws ArgumentError on out-of-range or overlapping segments.
std::vector<int> segments_to_frames(const SegmentList& segments, Index total_frames, int fill);

}  // namespace ent
