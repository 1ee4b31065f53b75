#pragma once

// Independent oracle: brute force over every multiset of up to four request
// types on an empty node. Wavelength feasibility by exhaustive search,
// quantum ports by direct matching check, modulation/power by a 0.05 dB sweep.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "qsim/optical_model.hpp"
#include "qsim/qroadm.hpp"
#include "test_support.hpp"

namespace qsim::test::oracle {

inline IslandId island(int i) { return IslandId{i}; }


struct Type {
  int a;
  int b;
  bool secured;
};

inline bool wavelengths_exist(const std::vector<Type>& reqs) {
  // one directed channel per request direction
  std::vector<std::pair<int, int>> dirs;
  for (const auto& r : reqs) {
    dirs.push_back({r.a, r.b});
    dirs.push_back({r.b, r.a});
  }
  std::vector<int> colour(dirs.size(), -1);
  std::function<bool(std::size_t)> go = [&](std::size_t k) {
    if (k == dirs.size()) return true;
    for (int c = 0; c < 4; ++c) {
      bool ok = true;
      for (std::size_t j = 0; j < k && ok; ++j) {
        if (colour[j] != c) continue;
        ok = dirs[j].first != dirs[k].first && dirs[j].second != dirs[k].second;
      }
      if (!ok) continue;
      colour[k] = c;
      if (go(k + 1)) return true;
    }
    colour[k] = -1;
    return false;
  };
  return go(0);
}

struct OracleResult {
  bool feasible = false;
  std::vector<std::optional<Modulation>> modulation;
  std::vector<std::vector<double>> powers;  // feasible grid points per request
};

inline OracleResult solve(const std::vector<Type>& reqs) {
  const auto& topo = shipped_topology();
  const auto& table = shipped_table();
  const BerModel ber;
  OracleResult out;
  out.modulation.resize(reqs.size());
  out.powers.resize(reqs.size());
  if (!wavelengths_exist(reqs)) return out;

  auto is_drop = [&](int island) { return topo.island(oracle::island(island)).port == IslandPort::Drop; };
  struct Q {
    int alice;
    int bob;
    PathClass cls;
  };
  std::vector<std::optional<Q>> q(reqs.size());
  std::set<int> ins;
  std::set<int> outs;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    if (!reqs[i].secured) continue;
    int alice = std::min(reqs[i].a, reqs[i].b);
    int bob = std::max(reqs[i].a, reqs[i].b);
    if (is_drop(alice)) std::swap(alice, bob);
    if (!ins.insert(alice).second || !outs.insert(bob).second) return out;
    q[i] = Q{alice, bob, is_drop(bob) ? PathClass::BypassDrop : PathClass::BypassBypass};
  }
  // span: (downlink?, island)
  auto span_of = [&](const Q& x) {
    return x.cls == PathClass::BypassBypass ? std::pair{true, x.bob} : std::pair{false, x.alice};
  };
  auto uses = [&](const Type& r, std::pair<bool, int> s) {
    return s.first ? (r.b == s.second || r.a == s.second) : (r.a == s.second || r.b == s.second);
  };
  // components over shared spans
  std::vector<int> comp(reqs.size());
  std::iota(comp.begin(), comp.end(), 0);
  std::function<int(int)> root = [&](int x) { return comp[x] == x ? x : root(comp[x]); };
  for (std::size_t k = 0; k < reqs.size(); ++k) {
    if (!q[k]) continue;
    const auto s = span_of(*q[k]);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      if (uses(reqs[i], s)) comp[root(static_cast<int>(i))] = root(static_cast<int>(k));
    }
  }
  auto count_on = [&](std::pair<bool, int> s) {
    int n = 0;
    for (const auto& r : reqs) n += (r.a == s.second) + (r.b == s.second);
    return n;  // each request using the island puts exactly one channel on each of its fibres
  };

  out.feasible = true;
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < reqs.size(); ++i) groups[root(static_cast<int>(i))].push_back(i);
  for (const auto& [g, members] : groups) {
    std::vector<std::pair<std::pair<bool, int>, PathClass>> spans;
    for (std::size_t k = 0; k < reqs.size(); ++k) {
      if (q[k] && root(static_cast<int>(k)) == g) spans.push_back({span_of(*q[k]), q[k]->cls});
    }
    bool found = false;
    for (Modulation m : kModulationsDensestFirst) {
      std::vector<double> good;
      auto ok_at = [&](double p) {
        for (std::size_t i : members) {
          OpticalChannel ch;
          ch.modulation = m;
          for (int dst : {reqs[i].a, reqs[i].b}) {
            const auto c = is_drop(dst) ? PathClass::BypassDrop : PathClass::BypassBypass;
            if (!(estimate_prefec_ber(ch, c, p, ber) < ber.fec_threshold)) return false;
          }
        }
        for (const auto& [s, cls] : spans) {
          const int n = count_on(s);
          if (table.find(cls, n, m) == nullptr) return false;
          if (!(estimate_skr_qber(cls, n, m, p, table).skr_bps > 0.0)) return false;
        }
        return true;
      };
      if (spans.empty()) {
        if (ok_at(-15.0)) good.push_back(-15.0);
      } else {
        for (int k = 0; k <= 800; ++k) {
          const double p = -35.0 + 0.05 * k;
          if (ok_at(p)) good.push_back(p);
        }
      }
      if (!good.empty()) {
        for (std::size_t i : members) {
          out.modulation[i] = m;
          out.powers[i] = good;
        }
        found = true;
        break;
      }
    }
    if (!found) out.feasible = false;
  }
  return out;
}


/// Every pair of distinct islands, unsecured and secured.
inline std::vector<Type> request_types() {
  std::vector<Type> types;
  for (int a = 1; a <= 4; ++a) {
    for (int b = a + 1; b <= 4; ++b) {
      types.push_back({a, b, false});
      types.push_back({a, b, true});
    }
  }
  return types;
}

/// Calls fn(indices) for every non-empty multiset of at most max_size types.
inline void for_each_multiset(std::size_t n_types, std::size_t max_size,
                              const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> pick;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t from, std::size_t left) {
    if (!pick.empty()) fn(pick);
    if (left == 0) return;
    for (std::size_t t = from; t < n_types; ++t) {
      pick.push_back(t);
      rec(t, left - 1);
      pick.pop_back();
    }
  };
  rec(0, max_size);
}

}  // namespace qsim::test::oracle
