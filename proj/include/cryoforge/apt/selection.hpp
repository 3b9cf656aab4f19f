#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cryoforge/apt/polyphase.hpp"
#include "cryoforge/apt/steerable.hpp"
#include "cryoforge/core/error.hpp"
#include "cryoforge/core/parallel.hpp"
#include "cryoforge/core/rng.hpp"

namespace cryoforge::apt {

enum class Mode { training, inference };

struct SelectionProbabilities {
  PatchSize patch;
  std::vector<double> logits;  // per component, lexicographic (p, q, r)
  std::vector<double> probs;
  double temperature = 1.0;
  Mode mode = Mode::inference;

  double at(const PhaseIndex& k) const { return probs[linear_index(k, patch)]; }
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> component_logits(const PolyphaseSet& ps, const SteerableSelectionNet& net,
                                            unsigned jobs = 1) {
  const KernelBank bank(net, ps.component_dims);
  std::vector<double> logits(ps.components.size());
  parallel_for(ps.components.size(), jobs, [&](std::size_t i) { logits[i] = bank.logit(ps.components[i]); });
  return logits;
}

/// Softmax over per-component logits of one shared selection net.
inline SelectionProbabilities selection_probs(const PolyphaseSet& ps, const SteerableSelectionNet& net,
                                              unsigned jobs = 1) {
  SelectionProbabilities sp;
  sp.patch = ps.patch;
  sp.logits = component_logits(ps, net, jobs);
  sp.probs = softmax(sp.logits);
  return sp;
}

/// Inference: argmax of the probabilities, ties to the smallest linear
/// (lexicographic) index. Training: argmax of softmax((log p + g) / t) with
/// g i.i.d. Gumbel(0, 1) drawn from `rng`.
inline PhaseIndex gumbel_select(const SelectionProbabilities& sp, Mode mode, double temperature, CounterRng& rng) {
  const auto& p = sp.probs;
  if (p.empty()) throw PreconditionError("gumbel_select: empty probability vector");
  std::size_t best = 0;
  if (mode == Mode::inference) {
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return phase_index(best, sp.patch);
  }
  if (!(temperature > 0.0)) throw PreconditionError("gumbel_select: temperature must be > 0 in training mode");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = -std::log(-std::log(rng.uniform_open()));
    const double score = (std::log(p[i]) + g) / temperature;
    if (score > top) {
      top = score;
      best = i;
    }
  }
  return phase_index(best, sp.patch);
}

inline PhaseIndex gumbel_select(const SelectionProbabilities& sp, CounterRng& rng) {
  return gumbel_select(sp, sp.mode, sp.temperature, rng);
}

struct AptOutput {
  Grid3<double> component;
  PhaseIndex index;
  SelectionProbabilities probs;
};

/// Decompose, score every component, select one phase, return it.
template <typename T>
AptOutput apt_forward(const Grid3<T>& vol, const PatchSize& s, const SteerableSelectionNet& net, Mode mode,
                      CounterRng& rng, double temperature = 1.0, unsigned jobs = 1) {
  const PolyphaseSet ps = polyphase_decompose(vol, s);
  SelectionProbabilities sp = selection_probs(ps, net, jobs);
  sp.mode = mode;
  sp.temperature = temperature;
  const PhaseIndex k = gumbel_select(sp, mode, temperature, rng);
  return {ps.at(k), k, std::move(sp)};
}

inline AptOutput apt_forward(const DensityVolume& vol, const PatchSize& s, const SteerableSelectionNet& net, Mode mode,
                             CounterRng& rng, double temperature = 1.0, unsigned jobs = 1) {
  return apt_forward(vol.data, s, net, mode, rng, temperature, jobs);
}

}  // namespace cryoforge::apt
