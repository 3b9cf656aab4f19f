#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cryoforge/apt/polyphase.hpp"
#include "cryoforge/apt/selection.hpp"
#include "cryoforge/apt/steerable.hpp"
#include "cryoforge/core/error.hpp"
#include "cryoforge/core/rng.hpp"

namespace cryoforge::apt {

/// Grid-exact rotation: a signed permutation of the (d, h, w) axes with
/// determinant +1, acting about the grid center. Output axis a reads input
/// axis perm[a], reversed when sign[a] < 0.
struct GridRotation {
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> sign{1, 1, 1};
};

/// The 24 rotations of the octahedral group, identity first.
inline std::vector<GridRotation> octahedral_group() {
  std::vector<GridRotation> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    int inversions = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        if (perm[static_cast<std::size_t>(i)] > perm[static_cast<std::size_t>(j)]) ++inversions;
    const int parity = inversions % 2 ? -1 : 1;
    for (int bits = 0; bits < 8; ++bits) {
      const std::array<int, 3> sign{bits & 4 ? -1 : 1, bits & 2 ? -1 : 1, bits & 1 ? -1 : 1};
      if (parity * sign[0] * sign[1] * sign[2] == 1) out.push_back({perm, sign});
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

template <typename T>
Grid3<T> rotate_grid(const Grid3<T>& in, const GridRotation& op) {
  const auto& n = in.dims();
  const std::array<std::size_t, 3> nin{n.d, n.h, n.w};
  const std::array<std::size_t, 3> nout{nin[static_cast<std::size_t>(op.perm[0])],
                                        nin[static_cast<std::size_t>(op.perm[1])],
                                        nin[static_cast<std::size_t>(op.perm[2])]};
  Grid3<T> out(Dims3{nout[0], nout[1], nout[2]});
  std::array<std::size_t, 3> u{}, v{};
  for (u[0] = 0; u[0] < nout[0]; ++u[0])
    for (u[1] = 0; u[1] < nout[1]; ++u[1])
      for (u[2] = 0; u[2] < nout[2]; ++u[2]) {
        for (std::size_t a = 0; a < 3; ++a) {
          const auto src = static_cast<std::size_t>(op.perm[a]);
          v[src] = op.sign[a] > 0 ? u[a] : nout[a] - 1 - u[a];
        }
        out(u[0], u[1], u[2]) = in(v[0], v[1], v[2]);
      }
  return out;
}

/// Phase of the rotated volume's component that holds the rotated component
/// `k` of the original (cubic patch assumed).
inline PhaseIndex rotate_phase(const PhaseIndex& k, const PatchSize& s, const GridRotation& op) {
  const std::array<std::size_t, 3> p{k.p, k.q, k.r};
  const std::array<std::size_t, 3> n{s.d, s.h, s.w};
  std::array<std::size_t, 3> out{};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto src = static_cast<std::size_t>(op.perm[a]);
    out[a] = op.sign[a] > 0 ? p[src] : n[src] - 1 - p[src];
  }
  return {out[0], out[1], out[2]};
}

namespace detail {

inline long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline long floor_mod(long a, long b) { return a - b * floor_div(a, b); }

template <typename T>
double max_abs_diff(const Grid3<T>& a, const Grid3<T>& b) {
  if (a.dims() != b.dims()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

inline std::size_t argmax(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

}  // namespace detail

/// Expected component after a circular input shift g = (gd, gh, gw):
/// Ψ(shift_g X)_k = circshift(Ψ(X)_{(k-g) mod s}, -floor((k-g)/s)).
struct ShiftMapping {
  PhaseIndex source;
  std::array<long, 3> coarse_shift{};  // applied with circshift
};

inline ShiftMapping shift_mapping(const PhaseIndex& k, const PatchSize& s, const std::array<long, 3>& g) {
  const std::array<long, 3> kk{static_cast<long>(k.p), static_cast<long>(k.q), static_cast<long>(k.r)};
  const std::array<long, 3> n{static_cast<long>(s.d), static_cast<long>(s.h), static_cast<long>(s.w)};
  ShiftMapping m;
  std::array<std::size_t, 3> src{};
  for (std::size_t a = 0; a < 3; ++a) {
    src[a] = static_cast<std::size_t>(detail::floor_mod(kk[a] - g[a], n[a]));
    m.coarse_shift[a] = -detail::floor_div(kk[a] - g[a], n[a]);
  }
  m.source = {src[0], src[1], src[2]};
  return m;
}

struct PropertyCheck {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed() const noexcept { return max_deviation <= tolerance; }
};

struct EquivarianceReport {
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::size_t edge = 0;
  PatchSize patch;
  std::vector<PropertyCheck> properties;

  bool passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyCheck& p) { return p.passed(); });
  }
  const PropertyCheck& property(const std::string& name) const {
    for (const auto& p : properties)
      if (p.name == name) return p;
    throw LookupError("no property named '" + name + "'");
  }
};

inline nlohmann::json to_json(const EquivarianceReport& r) {
  nlohmann::json j;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["edge"] = r.edge;
  j["patch"] = {r.patch.d, r.patch.h, r.patch.w};
  j["passed"] = r.passed();
  j["properties"] = nlohmann::json::array();
  for (const auto& p : r.properties)
    j["properties"].push_back(
        {{"name", p.name}, {"max_deviation", p.max_deviation}, {"tolerance", p.tolerance}, {"passed", p.passed()}});
  return j;
}

struct VerifyOptions {
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::size_t edge = 32;
  PatchSize patch{4, 4, 4};
  bool translation = true;
  bool rotation = true;
  unsigned jobs = 1;
};

inline Grid3<double> random_volume(const Dims3& dims, std::uint64_t key) {
  Grid3<double> g(dims);
  CounterRng rng(key);
  for (double& v : g) v = rng.normal();
  return g;
}

/// Random-volume, random-weight property suite for the selection net and
/// the APT forward pass in inference mode (circular boundary conditions).
///
///   shift_permutation      max |P(shift_g X)[k] - P(X)[(k-g) mod s]|, all g
///   translation_extraction APT(shift_g X) vs shifted APT(X), voxel exact
///   rotation_logit         max logit change under the 24 grid rotations
///   rotation_prob          same for probabilities
///   rotation_extraction    APT(RX) vs R·APT(X), voxel exact
inline EquivarianceReport verify_equivariance(const SteerableSelectionNet& net, const VerifyOptions& opt) {
  if (opt.trials < 1) throw PreconditionError("verify_equivariance: trials must be >= 1");
  validate(net);
  const Dims3 dims{opt.edge, opt.edge, opt.edge};
  check_divisible(dims, opt.patch);
  const PatchSize& s = opt.patch;
  const bool cubic_patch = s.d == s.h && s.h == s.w;

  EquivarianceReport rep;
  rep.trials = opt.trials;
  rep.seed = opt.seed;
  rep.edge = opt.edge;
  rep.patch = s;
  PropertyCheck shift_perm{"shift_permutation", 0.0, 1e-5};
  PropertyCheck shift_extract{"translation_extraction", 0.0, 0.0};
  PropertyCheck rot_logit{"rotation_logit", 0.0, 1e-6};
  PropertyCheck rot_prob{"rotation_prob", 0.0, 1e-5};
  PropertyCheck rot_extract{"rotation_extraction", 0.0, 0.0};
  const auto group = octahedral_group();
  const double inf = std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < opt.trials; ++t) {
    SteerableSelectionNet trial_net = net;
    CounterRng wrng(derive_key(opt.seed, {stream::apt_weights, t}));
    trial_net.randomize(wrng);
    const Grid3<double> x = random_volume(dims, derive_key(opt.seed, {stream::apt_volume, t}));
    const PolyphaseSet ps = polyphase_decompose(x, s);
    const SelectionProbabilities base = selection_probs(ps, trial_net, opt.jobs);
    const std::size_t sel = detail::argmax(base.probs);
    const PhaseIndex sel_k = phase_index(sel, s);

    if (opt.translation) {
      for (long gd = 0; gd < static_cast<long>(s.d); ++gd)
        for (long gh = 0; gh < static_cast<long>(s.h); ++gh)
          for (long gw = 0; gw < static_cast<long>(s.w); ++gw) {
            const auto xs = circshift(x, gd, gh, gw);
            const PolyphaseSet pss = polyphase_decompose(xs, s);
            const SelectionProbabilities sp = selection_probs(pss, trial_net, opt.jobs);
            for (std::size_t i = 0; i < s.count(); ++i) {
              const auto m = shift_mapping(phase_index(i, s), s, {gd, gh, gw});
              shift_perm.max_deviation =
                  std::max(shift_perm.max_deviation, std::abs(sp.probs[i] - base.probs[linear_index(m.source, s)]));
            }
            const PhaseIndex ks = phase_index(detail::argmax(sp.probs), s);
            const auto m = shift_mapping(ks, s, {gd, gh, gw});
            if (!(m.source == sel_k)) {
              shift_extract.max_deviation = inf;
              continue;
            }
            const auto expected = circshift(ps.at(sel_k), m.coarse_shift[0], m.coarse_shift[1], m.coarse_shift[2]);
            shift_extract.max_deviation =
                std::max(shift_extract.max_deviation, detail::max_abs_diff(pss.at(ks), expected));
          }
    }

    if (opt.rotation && cubic_patch) {
      for (const auto& op : group) {
        const auto xr = rotate_grid(x, op);
        const PolyphaseSet psr = polyphase_decompose(xr, s);
        const SelectionProbabilities sp = selection_probs(psr, trial_net, opt.jobs);
        for (std::size_t i = 0; i < s.count(); ++i) {
          const std::size_t j = linear_index(rotate_phase(phase_index(i, s), s, op), s);
          rot_logit.max_deviation = std::max(rot_logit.max_deviation, std::abs(sp.logits[j] - base.logits[i]));
          rot_prob.max_deviation = std::max(rot_prob.max_deviation, std::abs(sp.probs[j] - base.probs[i]));
        }
        const PhaseIndex kr = phase_index(detail::argmax(sp.probs), s);
        if (!(kr == rotate_phase(sel_k, s, op))) {
          rot_extract.max_deviation = inf;
          continue;
        }
        rot_extract.max_deviation =
            std::max(rot_extract.max_deviation, detail::max_abs_diff(psr.at(kr), rotate_grid(ps.at(sel_k), op)));
      }
    }
  }
  if (opt.translation) {
    rep.properties.push_back(shift_perm);
    rep.properties.push_back(shift_extract);
  }
  if (opt.rotation && cubic_patch) {
    rep.properties.push_back(rot_logit);
    rep.properties.push_back(rot_prob);
    rep.properties.push_back(rot_extract);
  }
  return rep;
}

}  // namespace cryoforge::apt
