#pragma once

// Transducer alignment lattice: forward-backward loss over all monotone
// alignments, occupancy gradients, and a literal enumeration oracle.
//
// Node (t, u) means "u target tokens emitted by frame t". From (t, u) a blank
// moves to (t+1, u) and the next target token moves to (t, u+1). Every
// alignment ends with the blank at (T-1, U).

#include <vector>

#include "ent/numerics.hpp"

namespace ent {

struct VocabLogProbLattice {
  Matrix blank;  // T x (U+1): log P(blank | t, u)
  Matrix token;  // T x U:     log P(y_{u+1} | t, u)

  VocabLogProbLattice() = default;
  VocabLogProbLattice(Matrix blank_lp, Matrix token_lp);

  Index frames() const { return blank.rows(); }
  Index target_length() const { return blank.cols() - 1; }
};

struct LatticePosteriors {
  Matrix alpha;  // T x (U+1), log prob of reaching (t, u)
  Matrix beta;   // T x (U+1), log prob of finishing from (t, u), final blank included
  Matrix grad_blank;
  Matrix grad_token;
  double log_likelihood = 0.0;
};

struct TransducerLoss {
  double loss = 0.0;  // +inf when no alignment has nonzero probability
  LatticePosteriors posteriors;
};

struct LatticeGradients {
  Matrix blank;
  Matrix token;
};

TransducerLoss transducer_loss(const VocabLogProbLattice& lattice);

// dLoss/d(node log-prob): minus the posterior probability that an alignment
// takes that transition. All zeros when the total probability is zero.
LatticeGradients transducer_grad(const VocabLogProbLattice& lattice,
                                 const LatticePosteriors& posteriors);

enum class AlignmentSymbol : unsigned char { Blank, Token };
using Alignment = std::vector<AlignmentSymbol>;

inline constexpr Index kBruteForceMaxSteps = 14;

// Every sequence of T blanks and U tokens whose last symbol is a blank.
std::vector<Alignment> enumerate_alignments(Index frames, Index target_length);
double alignment_log_prob(const VocabLogProbLattice& lattice, const Alignment& alignment);

// Negative log of the summed probability of every alignment; T + U must not
// exceed kBruteForceMaxSteps.
double brute_force_loss(const VocabLogProbLattice& lattice);

}  // namespace ent
