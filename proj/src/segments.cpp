#include "ent/segments.hpp"

#include <string>

namespace ent {

std::vector<int> segments_to_frames(const SegmentList& segments, Index total_frames, int fill) {
  std::vector<int> frames(static_cast<std::size_t>(total_frames), fill);
  std::vector<bool> covered(static_cast<std::size_t>(total_frames), false);
  for (const EmotionSegment& s : segments) {
    if (s.start_frame < 0 || s.end_frame > total_frames || s.start_frame >= s.end_frame) {
      throw ArgumentError("segment [" + std::to_string(s.start_frame) + ", " + std::to_string(s.end_frame) +
                          ") is outside [0, " + std::to_string(total_frames) + ")");
    }
    for (Index t = s.start_frame; t < s.end_frame; ++t) {
      if (covered[static_cast<std::size_t>(t)]) {
        throw ArgumentError("overlapping segments at frame " + std::to_string(t));
      }
      covered[static_cast<std::size_t>(t)] = true;
      frames[static_cast<std::size_t>(t)] = s.label;
    }
  }
  return frames;
}

}  // namespace ent
