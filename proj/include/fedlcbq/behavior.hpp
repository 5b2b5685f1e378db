#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/dp.hpp"
#include "fedlcbq/mdp.hpp"

namespace fedlcbq {

// Behavior-policy construction for offline data collection.

enum class BehaviorKind { epsilon_optimal, uniform, masked_uniform, explicit_policy };

struct BehaviorSpec {
  BehaviorKind kind = BehaviorKind::uniform;
  double epsilon = 0.0;  // epsilon_optimal only

  // masked_uniform: either one globally allowed action, or a full
  // [h-1][s] -> list-of-actions table. Every (h,s) mask must be non-empty.
  int single_action = -1;
  std::vector<std::vector<std::vector<int>>> allowed;

  StochasticPolicy explicit_pi;  // explicit_policy only
};

// Canonical short id recorded in dataset sidecars.
inline std::string behavior_id(const BehaviorSpec& spec) {
  switch (spec.kind) {
    case BehaviorKind::uniform: return "uniform";
    case BehaviorKind::epsilon_optimal: {
      std::ostringstream os;
      os << "epsilon_optimal(" << spec.epsilon << ")";
      return os.str();
    }
    case BehaviorKind::masked_uniform:
      if (spec.single_action >= 0) {
        std::ostringstream os;
        os << "masked_uniform(action=" << spec.single_action << ")";
        return os.str();
      }
      return "masked_uniform(custom)";
    case BehaviorKind::explicit_policy: return "explicit";
  }
  return "unknown";
}

// epsilon_optimal(e): (1-e) mass on the deterministic optimal policy plus e/A
// everywhere; uniform and masked_uniform normalize over the (allowed) action
// set; explicit passes a caller-supplied stochastic policy through validation.
inline StochasticPolicy make_behavior_policy(const TabularMdp& mdp, const BehaviorSpec& spec) {
  StochasticPolicy mu;
  mu.S = mdp.S; mu.A = mdp.A; mu.H = mdp.H;
  mu.pi = Table3<double>(mdp.H, mdp.S, mdp.A);
  switch (spec.kind) {
    case BehaviorKind::uniform: {
      double p = 1.0 / mdp.A;
      for (double& x : mu.pi.data) x = p;
      break;
    }
    case BehaviorKind::epsilon_optimal: {
      if (!(spec.epsilon >= 0.0 && spec.epsilon <= 1.0))
        throw ValidationError("epsilon_optimal requires epsilon in [0,1]");
      DpResult opt = value_iteration(mdp);
      double base = spec.epsilon / mdp.A;
      for (int h = 1; h <= mdp.H; ++h)
        for (int s = 0; s < mdp.S; ++s) {
          for (int a = 0; a < mdp.A; ++a) mu.pi.at(h, s, a) = base;
          mu.pi.at(h, s, opt.pi.action.at(h, s)) += 1.0 - spec.epsilon;
        }
      break;
    }
    case BehaviorKind::masked_uniform: {
      if (spec.single_action >= 0) {
        if (spec.single_action >= mdp.A)
          throw ValidationError("masked_uniform single_action out of range");
        for (int h = 1; h <= mdp.H; ++h)
          for (int s = 0; s < mdp.S; ++s) mu.pi.at(h, s, spec.single_action) = 1.0;
        break;
      }
      if (static_cast<int>(spec.allowed.size()) != mdp.H)
        throw ValidationError("masked_uniform mask must have H step entries");
      for (int h = 1; h <= mdp.H; ++h) {
        if (static_cast<int>(spec.allowed[h - 1].size()) != mdp.S)
          throw ValidationError("masked_uniform mask must have S state entries at h=" +
                                std::to_string(h));
        for (int s = 0; s < mdp.S; ++s) {
          const auto& acts = spec.allowed[h - 1][s];
          if (acts.empty()) {
            std::ostringstream os;
            os << "masked_uniform mask empty at (h=" << h << ", s=" << s << ")";
            throw ValidationError(os.str());
          }
          double p = 1.0 / acts.size();
          for (int a : acts) {
            if (a < 0 || a >= mdp.A)
              throw ValidationError("masked_uniform mask action out of range");
            mu.pi.at(h, s, a) += p;
          }
        }
      }
      break;
    }
    case BehaviorKind::explicit_policy:
      mu = spec.explicit_pi;
      break;
  }
  validate_policy(mu, mdp.S, mdp.A, mdp.H);
  return mu;
}

inline nlohmann::json behavior_to_json(const BehaviorSpec& spec) {
  nlohmann::json j;
  switch (spec.kind) {
    case BehaviorKind::uniform: j["kind"] = "uniform"; break;
    case BehaviorKind::epsilon_optimal:
      j["kind"] = "epsilon_optimal";
      j["epsilon"] = spec.epsilon;
      break;
    case BehaviorKind::masked_uniform:
      j["kind"] = "masked_uniform";
      if (spec.single_action >= 0) j["single_action"] = spec.single_action;
      else j["allowed"] = spec.allowed;
      break;
    case BehaviorKind::explicit_policy: {
      j["kind"] = "explicit";
      auto& pi = j["pi"] = nlohmann::json::array();
      for (int h = 1; h <= spec.explicit_pi.H; ++h) {
        nlohmann::json hs = nlohmann::json::array();
        for (int s = 0; s < spec.explicit_pi.S; ++s) {
          nlohmann::json row = nlohmann::json::array();
          for (int a = 0; a < spec.explicit_pi.A; ++a)
            row.push_back(spec.explicit_pi.pi.at(h, s, a));
          hs.push_back(std::move(row));
        }
        pi.push_back(std::move(hs));
      }
      break;
    }
  }
  return j;
}

inline BehaviorSpec behavior_from_json(const nlohmann::json& j) {
  BehaviorSpec spec;
  std::string kind;
  try {
    kind = j.at("kind").get<std::string>();
    if (kind == "uniform") {
      spec.kind = BehaviorKind::uniform;
    } else if (kind == "epsilon_optimal") {
      spec.kind = BehaviorKind::epsilon_optimal;
      spec.epsilon = j.at("epsilon").get<double>();
    } else if (kind == "masked_uniform") {
      spec.kind = BehaviorKind::masked_uniform;
      if (j.contains("single_action"))
        spec.single_action = j.at("single_action").get<int>();
      else
        spec.allowed = j.at("allowed").get<std::vector<std::vector<std::vector<int>>>>();
    } else if (kind == "explicit") {
      spec.kind = BehaviorKind::explicit_policy;
      auto pi = j.at("pi").get<std::vector<std::vector<std::vector<double>>>>();
      if (pi.empty() || pi[0].empty() || pi[0][0].empty())
        throw ValidationError("explicit behavior pi must be [H][S][A]");
      spec.explicit_pi.H = static_cast<int>(pi.size());
      spec.explicit_pi.S = static_cast<int>(pi[0].size());
      spec.explicit_pi.A = static_cast<int>(pi[0][0].size());
      spec.explicit_pi.pi =
          Table3<double>(spec.explicit_pi.H, spec.explicit_pi.S, spec.explicit_pi.A);
      for (int h = 1; h <= spec.explicit_pi.H; ++h)
        for (int s = 0; s < spec.explicit_pi.S; ++s)
          for (int a = 0; a < spec.explicit_pi.A; ++a)
            spec.explicit_pi.pi.at(h, s, a) = pi[h - 1].at(s).at(a);
    } else {
      throw ValidationError("unknown behavior kind: " + kind);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed behavior spec: ") + e.what());
  }
  return spec;
}

}  // namespace fedlcbq
