#pragma once

// Emotion distributions over the T x (U+1) alignment lattice and the losses
// that supervise them from utterance-level or interval-level labels.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ent/numerics.hpp"

namespace ent {

class EmotionLattice {
 public:
  EmotionLattice() = default;
  // `log_probs` holds one normalized log distribution per node, row-major
  // over (t, u).
  EmotionLattice(Index frames, Index states, Matrix log_probs);
  static EmotionLattice from_logits(Index frames, Index states, const Matrix& logits);
  static EmotionLattice from_probs(Index frames, Index states, const Matrix& probs);

  Index frames() const { return frames_; }
  Index states() const { return states_; }
  Index classes() const { return log_probs_.cols(); }
  Index node(Index t, Index u) const { return t * states_ + u; }

  double log_prob(Index t, Index u, Index k) const { return log_probs_(node(t, u), k); }
  double prob(Index t, Index u, Index k) const { return std::exp(log_prob(t, u, k)); }
  const Matrix& log_probs() const { return log_probs_; }
  Matrix probs() const { return log_probs_.array().exp().matrix(); }

 private:
  Index frames_ = 0;
  Index states_ = 0;
  Matrix log_probs_;
};

struct SelectedNodes {
  Index t_star = 0, u_star = 0;  // argmax of the target-emotion probability
  Index t_neg = 0, u_neg = 0;    // argmin of the neutral probability
};

// Half-open frame interval [begin, end) carrying one emotion label.
struct FrameRegion {
  Index begin = 0;
  Index end = 0;
  int label = 0;
};

struct EmotionLossResult {
  double loss = 0.0;
  Matrix grad_log_probs;  // dLoss/d(node log-prob), same shape as the lattice
  std::optional<SelectedNodes> selected;
};

enum class LatticeLossKind { None, MaxPool, Temporal, Token, Full, Region };

std::string to_string(LatticeLossKind kind);
LatticeLossKind parse_lattice_loss(const std::string& name);

// probs[t][u] = softmax(W (h_t + g_u) + b) over K emotions.
EmotionLattice emotion_joint(const Matrix& h, const Matrix& g, const AdditiveJoint& joint);

// Ties resolve to the smallest t, then the smallest u.
SelectedNodes select_nodes(const EmotionLattice& lattice, int k_star, int k_neutral);

EmotionLossResult lattice_max_pool_loss(const EmotionLattice& lattice, int k_star, int k_neutral);
EmotionLossResult temporal_lattice_loss(const EmotionLattice& lattice, int k_star, int k_neutral);
EmotionLossResult token_lattice_loss(const EmotionLattice& lattice, int k_star, int k_neutral);
EmotionLossResult full_lattice_loss(const EmotionLattice& lattice, int k_star);
EmotionLossResult region_supervised_loss(const EmotionLattice& lattice,
                                         std::span<const FrameRegion> regions);

// Regions must tile [0, frames) exactly, in order, with valid labels.
void validate_regions(std::span<const FrameRegion> regions, Index frames, Index classes);

EmotionLossResult emotion_lattice_loss(LatticeLossKind kind, const EmotionLattice& lattice,
                                       int k_star, int k_neutral,
                                       std::span<const FrameRegion> regions = {});

// Chains dLoss/d(log-prob) back to the per-node logits.
inline Matrix emotion_logits_grad(const EmotionLattice& lattice, const Matrix& grad_log_probs) {
  return log_softmax_rows_backward(lattice.log_probs(), grad_log_probs);
}

}  // namespace ent
