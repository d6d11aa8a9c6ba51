#include "ent/transducer_lattice.hpp"

#include <string>

namespace ent {
namespace {

constexpr double kNegInfD = kNegInf<double>;

void validate(const VocabLogProbLattice& lattice) {
  if (lattice.frames() < 1) throw ArgumentError("transducer lattice needs at least one frame");
  if (lattice.blank.cols() < 1) throw ArgumentError("transducer lattice has no predictor states");
  if (lattice.token.rows() != lattice.frames() || lattice.token.cols() != lattice.target_length()) {
    throw ArgumentError("transducer lattice: token table must be T x U");
  }
  auto check = [](const Matrix& m, const char* what) {
    for (Index k = 0; k < m.size(); ++k) {
      const double v = m.data()[k];
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw NumericError(std::string("transducer lattice: non-finite ") + what + " log-prob");
      }
    }
  };
  check(lattice.blank, "blank");
  check(lattice.token, "token");
}

}  // namespace

VocabLogProbLattice::VocabLogProbLattice(Matrix blank_lp, Matrix token_lp)
    : blank(std::move(blank_lp)), token(std::move(token_lp)) {}

TransducerLoss transducer_loss(const VocabLogProbLattice& lattice) {
  validate(lattice);
  const Index frames = lattice.frames();
  const Index targets = lattice.target_length();

  TransducerLoss out;
  LatticePosteriors& post = out.posteriors;
  post.alpha = Matrix::Constant(frames, targets + 1, kNegInfD);
  post.beta = Matrix::Constant(frames, targets + 1, kNegInfD);

  for (Index t = 0; t < frames; ++t) {
    for (Index u = 0; u <= targets; ++u) {
      if (t == 0 && u == 0) {
        post.alpha(0, 0) = 0.0;
        continue;
      }
      double acc = kNegInfD;
      if (t > 0) acc = log_add(acc, post.alpha(t - 1, u) + lattice.blank(t - 1, u));
      if (u > 0) acc = log_add(acc, post.alpha(t, u - 1) + lattice.token(t, u - 1));
      post.alpha(t, u) = acc;
    }
  }

  for (Index t = frames - 1; t >= 0; --t) {
    for (Index u = targets; u >= 0; --u) {
      if (t == frames - 1 && u == targets) {
        post.beta(t, u) = lattice.blank(t, u);
        continue;
      }
      double acc = kNegInfD;
      if (t + 1 < frames) acc = log_add(acc, post.beta(t + 1, u) + lattice.blank(t, u));
      if (u < targets) acc = log_add(acc, post.beta(t, u + 1) + lattice.token(t, u));
      post.beta(t, u) = acc;
    }
  }

  post.log_likelihood = post.alpha(frames - 1, targets) + lattice.blank(frames - 1, targets);
  out.loss = -post.log_likelihood;
  LatticeGradients grads = transducer_grad(lattice, post);
  post.grad_blank = std::move(grads.blank);
  post.grad_token = std::move(grads.token);
  return out;
}

LatticeGradients transducer_grad(const VocabLogProbLattice& lattice,
                                 const LatticePosteriors& post) {
  const Index frames = lattice.frames();
  const Index targets = lattice.target_length();
  LatticeGradients grads{Matrix::Zero(frames, targets + 1), Matrix::Zero(frames, targets)};
  const double log_z = post.log_likelihood;
  if (log_z == kNegInfD) return grads;

  auto occupancy = [log_z](double log_mass) {
    return log_mass == kNegInfD ? 0.0 : -std::exp(log_mass - log_z);
  };
  for (Index t = 0; t < frames; ++t) {
    for (Index u = 0; u <= targets; ++u) {
      if (t + 1 < frames) {
        grads.blank(t, u) = occupancy(post.alpha(t, u) + lattice.blank(t, u) + post.beta(t + 1, u));
      } else if (u == targets) {
        grads.blank(t, u) = occupancy(post.alpha(t, u) + lattice.blank(t, u));
      }
      if (u < targets) {
        grads.token(t, u) = occupancy(post.alpha(t, u) + lattice.token(t, u) + post.beta(t, u + 1));
      }
    }
  }
  return grads;
}

std::vector<Alignment> enumerate_alignments(Index frames, Index target_length) {
  if (frames < 1 || target_length < 0) throw ArgumentError("enumerate_alignments: bad lattice size");
  if (frames + target_length > kBruteForceMaxSteps) {
    throw ArgumentError("enumerate_alignments: T + U exceeds the enumeration bound of " +
                        std::to_string(kBruteForceMaxSteps));
  }
  std::vector<Alignment> out;
  Alignment current;
  // The final blank is fixed; enumerate the T-1 remaining blanks and U tokens.
  auto recurse = [&](auto&& self, Index blanks_left, Index tokens_left) -> void {
    if (blanks_left == 0 && tokens_left == 0) {
      Alignment full = current;
      full.push_back(AlignmentSymbol::Blank);
      out.push_back(std::move(full));
      return;
    }
    if (blanks_left > 0) {
      current.push_back(AlignmentSymbol::Blank);
      self(self, blanks_left - 1, tokens_left);
      current.pop_back();
    }
    if (tokens_left > 0) {
      current.push_back(AlignmentSymbol::Token);
      self(self, blanks_left, tokens_left - 1);
      current.pop_back();
    }
  };
  recurse(recurse, frames - 1, target_length);
  return out;
}

double alignment_log_prob(const VocabLogProbLattice& lattice, const Alignment& alignment) {
  Index t = 0;
  Index u = 0;
  double total = 0.0;
  for (AlignmentSymbol s : alignment) {
    if (t >= lattice.frames()) throw ArgumentError("alignment runs past the last frame");
    if (s == AlignmentSymbol::Blank) {
      total += lattice.blank(t, u);
      ++t;
    } else {
      if (u >= lattice.target_length()) throw ArgumentError("alignment emits too many tokens");
      total += lattice.token(t, u);
      ++u;
    }
  }
  if (t != lattice.frames() || u != lattice.target_length()) {
    throw ArgumentError("alignment does not end at the terminal node");
  }
  return total;
}

double brute_force_loss(const VocabLogProbLattice& lattice) {
  validate(lattice);
  if (lattice.frames() + lattice.target_length() > kBruteForceMaxSteps) {
    throw ArgumentError("brute_force_loss: T + U exceeds the enumeration bound of " +
                        std::to_string(kBruteForceMaxSteps));
  }
  double total = kNegInfD;
  for (const Alignment& a : enumerate_alignments(lattice.frames(), lattice.target_length())) {
    total = log_add(total, alignment_log_prob(lattice, a));
  }
  return -total;
}

}  // namespace ent
