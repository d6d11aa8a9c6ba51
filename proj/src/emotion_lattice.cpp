#include "ent/emotion_lattice.hpp"

#include <sstream>

namespace ent {

EmotionLattice::EmotionLattice(Index frames, Index states, Matrix log_probs)
    : frames_(frames), states_(states), log_probs_(std::move(log_probs)) {
  if (frames < 1 || states < 1) throw ArgumentError("emotion lattice needs T >= 1 and U+1 >= 1");
  if (log_probs_.rows() != frames * states) {
    throw ArgumentError("emotion lattice: expected " + std::to_string(frames * states) +
                        " node rows, got " + std::to_string(log_probs_.rows()));
  }
}

EmotionLattice EmotionLattice::from_logits(Index frames, Index states, const Matrix& logits) {
  return EmotionLattice(frames, states, log_softmax_rows(logits));
}

EmotionLattice EmotionLattice::from_probs(Index frames, Index states, const Matrix& probs) {
  if ((probs.array() <= 0.0).any() || (probs.array() > 1.0).any()) {
    throw ArgumentError("emotion lattice: probabilities must lie in (0, 1]");
  }
  if (((probs.rowwise().sum().array() - 1.0).abs() > 1e-9).any()) {
    throw ArgumentError("emotion lattice: node distributions must sum to 1");
  }
  return EmotionLattice(frames, states, probs.array().log().matrix());
}

std::string to_string(LatticeLossKind kind) {
  switch (kind) {
    case LatticeLossKind::None: return "none";
    case LatticeLossKind::MaxPool: return "maxpool";
    case LatticeLossKind::Temporal: return "temporal";
    case LatticeLossKind::Token: return "token";
    case LatticeLossKind::Full: return "full";
    case LatticeLossKind::Region: return "region";
  }
  return "none";
}

LatticeLossKind parse_lattice_loss(const std::string& name) {
  for (LatticeLossKind k : {LatticeLossKind::None, LatticeLossKind::MaxPool, LatticeLossKind::Temporal,
                            LatticeLossKind::Token, LatticeLossKind::Full, LatticeLossKind::Region}) {
    if (to_string(k) == name) return k;
  }
  throw ArgumentError("unknown lattice loss '" + name +
                      "' (expected none, maxpool, temporal, token, full or region)");
}

EmotionLattice emotion_joint(const Matrix& h, const Matrix& g, const AdditiveJoint& joint) {
  return EmotionLattice::from_logits(h.rows(), g.rows(), joint.forward(h, g));
}

namespace {

void check_classes(const EmotionLattice& lattice, int k_star, int k_neutral) {
  if (lattice.classes() < 2) throw ArgumentError("emotion lattice needs at least two classes");
  if (k_star < 0 || k_star >= lattice.classes() || k_neutral < 0 || k_neutral >= lattice.classes()) {
    throw ArgumentError("emotion class index out of range");
  }
}

}  // namespace

SelectedNodes select_nodes(const EmotionLattice& lattice, int k_star, int k_neutral) {
  check_classes(lattice, k_star, k_neutral);
  SelectedNodes sel;
  double best = kNegInf<double>;
  double worst = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < lattice.frames(); ++t) {
    for (Index u = 0; u < lattice.states(); ++u) {
      const double pos = lattice.log_prob(t, u, k_star);
      if (pos > best) {
        best = pos;
        sel.t_star = t;
        sel.u_star = u;
      }
      const double neg = lattice.log_prob(t, u, k_neutral);
      if (neg < worst) {
        worst = neg;
        sel.t_neg = t;
        sel.u_neg = u;
      }
    }
  }
  return sel;
}

EmotionLossResult lattice_max_pool_loss(const EmotionLattice& lattice, int k_star, int k_neutral) {
  const SelectedNodes sel = select_nodes(lattice, k_star, k_neutral);
  EmotionLossResult out;
  out.grad_log_probs = Matrix::Zero(lattice.log_probs().rows(), lattice.classes());
  out.loss = -lattice.log_prob(sel.t_star, sel.u_star, k_star) -
             lattice.log_prob(sel.t_neg, sel.u_neg, k_neutral);
  out.grad_log_probs(lattice.node(sel.t_star, sel.u_star), k_star) -= 1.0;
  out.grad_log_probs(lattice.node(sel.t_neg, sel.u_neg), k_neutral) -= 1.0;
  out.selected = sel;
  return out;
}

EmotionLossResult temporal_lattice_loss(const EmotionLattice& lattice, int k_star, int k_neutral) {
  const SelectedNodes sel = select_nodes(lattice, k_star, k_neutral);
  EmotionLossResult out;
  out.grad_log_probs = Matrix::Zero(lattice.log_probs().rows(), lattice.classes());
  for (Index u = 0; u < lattice.states(); ++u) {
    out.loss -= lattice.log_prob(sel.t_star, u, k_star);
    out.loss -= lattice.log_prob(sel.t_neg, u, k_neutral);
    out.grad_log_probs(lattice.node(sel.t_star, u), k_star) -= 1.0;
    out.grad_log_probs(lattice.node(sel.t_neg, u), k_neutral) -= 1.0;
  }
  out.selected = sel;
  return out;
}

EmotionLossResult token_lattice_loss(const EmotionLattice& lattice, int k_star, int k_neutral) {
  const SelectedNodes sel = select_nodes(lattice, k_star, k_neutral);
  EmotionLossResult out;
  out.grad_log_probs = Matrix::Zero(lattice.log_probs().rows(), lattice.classes());
  for (Index t = 0; t < lattice.frames(); ++t) {
    out.loss -= lattice.log_prob(t, sel.u_star, k_star);
    out.loss -= lattice.log_prob(t, sel.u_neg, k_neutral);
    out.grad_log_probs(lattice.node(t, sel.u_star), k_star) -= 1.0;
    out.grad_log_probs(lattice.node(t, sel.u_neg), k_neutral) -= 1.0;
  }
  out.selected = sel;
  return out;
}

EmotionLossResult full_lattice_loss(const EmotionLattice& lattice, int k_star) {
  const FrameRegion whole{0, lattice.frames(), k_star};
  return region_supervised_loss(lattice, std::span<const FrameRegion>(&whole, 1));
}

void validate_regions(std::span<const FrameRegion> regions, Index frames, Index classes) {
  if (regions.empty()) throw ArgumentError("region supervision needs at least one region");
  Index expected = 0;
  for (const FrameRegion& r : regions) {
    std::ostringstream where;
    where << "region [" << r.begin << ", " << r.end << ")";
    if (r.begin != expected) {
      throw ArgumentError(where.str() + (r.begin < expected ? " overlaps its predecessor"
                                                            : " leaves a gap before it"));
    }
    if (r.end <= r.begin) throw ArgumentError(where.str() + " is empty");
    if (r.label < 0 || r.label >= classes) throw ArgumentError(where.str() + " has an invalid label");
    expected = r.end;
  }
  if (expected != frames) {
    throw ArgumentError("regions cover " + std::to_string(expected) + " of " +
                        std::to_string(frames) + " frames");
  }
}

EmotionLossResult region_supervised_loss(const EmotionLattice& lattice,
                                         std::span<const FrameRegion> regions) {
  validate_regions(regions, lattice.frames(), lattice.classes());
  const double nodes = static_cast<double>(lattice.frames() * lattice.states());
  EmotionLossResult out;
  out.grad_log_probs = Matrix::Zero(lattice.log_probs().rows(), lattice.classes());
  for (const FrameRegion& r : regions) {
    for (Index t = r.begin; t < r.end; ++t) {
      for (Index u = 0; u < lattice.states(); ++u) {
        out.loss -= lattice.log_prob(t, u, r.label);
        out.grad_log_probs(lattice.node(t, u), r.label) = -1.0 / nodes;
      }
    }
  }
  out.loss /= nodes;
  return out;
}

EmotionLossResult emotion_lattice_loss(LatticeLossKind kind, const EmotionLattice& lattice,
                                       int k_star, int k_neutral,
                                       std::span<const FrameRegion> regions) {
  switch (kind) {
    case LatticeLossKind::None: {
      EmotionLossResult out;
      out.grad_log_probs = Matrix::Zero(lattice.log_probs().rows(), lattice.classes());
      return out;
    }
    case LatticeLossKind::MaxPool: return lattice_max_pool_loss(lattice, k_star, k_neutral);
    case LatticeLossKind::Temporal: return temporal_lattice_loss(lattice, k_star, k_neutral);
    case LatticeLossKind::Token: return token_lattice_loss(lattice, k_star, k_neutral);
    case LatticeLossKind::Full: return full_lattice_loss(lattice, k_star);
    case LatticeLossKind::Region:
      if (regions.empty()) throw ArgumentError("region lattice loss selected but no regions given");
      return region_supervised_loss(lattice, regions);
  }
  throw ArgumentError("unknown lattice loss kind");
}

}  // namespace ent
