#pragma once

#include <string>

#include "fedlcbq/behavior.hpp"
#include "fedlcbq/mdp.hpp"
#include "fedlcbq/rng.hpp"

namespace fedlcbq {

// Built-in MDP families used by the command line tools and the test suite.

// Fully random tabular instance: every transition row is drawn from a flat
// Dirichlet, every mean reward from Uniform[0,1], and the initial distribution
// from a flat Dirichlet. Draw order is pinned (rho first, then (h, s, a) rows
// in lexicographic order, transition row before reward) so a seed fully
// determines the instance.
inline TabularMdp make_random_mdp(int S, int A, int H, uint64_t seed) {
  if (S < 1 || A < 1 || H < 1) throw ValidationError("mdp dimensions must be positive");
  TabularMdp mdp;
  mdp.S = S; mdp.A = A; mdp.H = H;
  mdp.P = Table4<double>(H, S, A, S);
  mdp.r = Table3<double>(H, S, A);
  Rng rng(seed);
  mdp.rho = rng.dirichlet_uniform(S);
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        std::vector<double> row = rng.dirichlet_uniform(S);
        for (int s2 = 0; s2 < S; ++s2) mdp.P.at(h, s, a, s2) = row[s2];
        mdp.r.at(h, s, a) = rng.uniform01();
      }
  validate_mdp(mdp);
  return mdp;
}

// Deterministic corridor with A = 2: action 1 advances one state, action 0
// stays put, the walk starts in state 0, and the only reward is 1 at the last
// step in the goal state S-1 (any action). Reaching the goal takes S-1
// advances, so H >= S makes the optimal value exactly 1.
inline TabularMdp make_chain_mdp(int S, int H) {
  if (S < 1 || H < 1) throw ValidationError("mdp dimensions must be positive");
  if (H < S) throw ValidationError("chain mdp needs H >= S to be solvable");
  const int A = 2;
  TabularMdp mdp;
  mdp.S = S; mdp.A = A; mdp.H = H;
  mdp.P = Table4<double>(H, S, A, S);
  mdp.r = Table3<double>(H, S, A);
  mdp.rho.assign(S, 0.0);
  mdp.rho[0] = 1.0;
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      mdp.P.at(h, s, 0, s) = 1.0;
      mdp.P.at(h, s, 1, std::min(s + 1, S - 1)) = 1.0;
      for (int a = 0; a < A; ++a)
        if (h == H && s == S - 1) mdp.r.at(h, s, a) = 1.0;
    }
  validate_mdp(mdp);
  return mdp;
}

// Heterogeneous-coverage family. Transitions ignore the action (uniform over
// states), the initial distribution is uniform, and the reward is 1 on action
// 0 in the first half of the horizon and 1 on action A-1 in the second half.
// An agent whose behavior only ever plays action 0 covers exactly half of the
// optimal trajectory; the complementary agent covers the other half. Each
// half-coverage behavior alone has infinite clipped concentrability with
// respect to the optimal policy while a balanced mixture keeps it finite,
// which is the regime where collaboration is provably necessary.
inline TabularMdp make_split_mdp(int S, int A, int H) {
  if (S < 1 || H < 1) throw ValidationError("mdp dimensions must be positive");
  if (A < 2) throw ValidationError("split mdp needs A >= 2");
  TabularMdp mdp;
  mdp.S = S; mdp.A = A; mdp.H = H;
  mdp.P = Table4<double>(H, S, A, S);
  mdp.r = Table3<double>(H, S, A);
  mdp.rho.assign(S, 1.0 / S);
  const int half = H / 2;
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        for (int s2 = 0; s2 < S; ++s2) mdp.P.at(h, s, a, s2) = 1.0 / S;
        if ((h <= half && a == 0) || (h > half && a == A - 1)) mdp.r.at(h, s, a) = 1.0;
      }
  validate_mdp(mdp);
  return mdp;
}

// Behavior for agent m in a split-mdp experiment: the first half of the fleet
// always plays action 0, the rest always play action A-1.
inline BehaviorSpec split_behavior(int agent_id, int M, int A) {
  if (M < 1 || agent_id < 0 || agent_id >= M) throw ValidationError("bad agent id");
  BehaviorSpec spec;
  spec.kind = BehaviorKind::masked_uniform;
  spec.single_action = agent_id < (M + 1) / 2 ? 0 : A - 1;
  return spec;
}

inline TabularMdp make_mdp(const std::string& kind, int S, int A, int H, uint64_t seed) {
  if (kind == "random") return make_random_mdp(S, A, H, seed);
  if (kind == "chain") return make_chain_mdp(S, H);
  if (kind == "split") return make_split_mdp(S, A, H);
  throw ValidationError("unknown mdp kind '" + kind + "' (expected random, chain or split)");
}

}  // namespace fedlcbq
