#pragma once

#include "pmon/core.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace pmon {

/// Cyclic visit order per agent. cumulative[j][m] is the distance travelled
/// before reaching the m-th stop (0 for the first); lengths[j] includes the
/// closing leg back to the first stop.
struct Schedule {
  std::vector<std::vector<int>> tours;
  std::vector<std::vector<double>> cumulative;
  std::vector<double> lengths;
  std::vector<double> history;  // best max-length per generation, if recorded

  double max_length() const { return lengths.empty() ? 0.0 : *std::max_element(lengths.begin(), lengths.end()); }
  int num_agents() const { return static_cast<int>(tours.size()); }
};

inline double tour_length(const std::vector<Vec>& pts, const std::vector<int>& tour) {
  double len = 0.0;
  for (std::size_t m = 0; m < tour.size(); ++m)
    len += (pts[static_cast<std::size_t>(tour[(m + 1) % tour.size()])] - pts[static_cast<std::size_t>(tour[m])]).norm();
  return len;
}

inline Schedule make_schedule(const std::vector<Vec>& pts, std::vector<std::vector<int>> tours) {
  Schedule s;
  s.tours = std::move(tours);
  for (const auto& t : s.tours) {
    std::vector<double> d;
    double acc = 0.0;
    for (std::size_t m = 0; m < t.size(); ++m) {
      if (m > 0) acc += (pts[static_cast<std::size_t>(t[m])] - pts[static_cast<std::size_t>(t[m - 1])]).norm();
      d.push_back(acc);
    }
    s.cumulative.push_back(std::move(d));
    s.lengths.push_back(tour_length(pts, t));
  }
  return s;
}

struct GaOptions {
  int population = 100;
  int generations = 3000;
  double elite_fraction = 0.1;
  int tournament = 3;
  double swap_rate = 0.4;
  double reversal_rate = 0.4;
  double break_rate = 0.3;
  std::uint64_t seed = 1;
  bool record_history = false;
};

namespace detail {

struct Chromosome {
  std::vector<int> perm;
  std::vector<int> breaks;  // N-1 sorted cut points in [0, M]
  double max_len = 0.0;
  double total = 0.0;
};

inline std::vector<std::vector<int>> split(const Chromosome& c, int agents) {
  std::vector<std::vector<int>> tours(static_cast<std::size_t>(agents));
  int lo = 0;
  for (int j = 0; j < agents; ++j) {
    const int hi = (j + 1 < agents) ? c.breaks[static_cast<std::size_t>(j)] : static_cast<int>(c.perm.size());
    tours[static_cast<std::size_t>(j)].assign(c.perm.begin() + lo, c.perm.begin() + hi);
    lo = hi;
  }
  return tours;
}

inline void score(Chromosome& c, const std::vector<Vec>& pts, int agents) {
  c.max_len = 0.0;
  c.total = 0.0;
  for (const auto& t : split(c, agents)) {
    const double l = tour_length(pts, t);
    c.max_len = std::max(c.max_len, l);
    c.total += l;
  }
}

inline bool better(const Chromosome& a, const Chromosome& b) {
  if (a.max_len != b.max_len) return a.max_len < b.max_len;
  return a.total < b.total;
}

}  // namespace detail

/// Min-max multiple travelling salesman heuristic: a permutation-with-breaks
/// genetic algorithm with elitism, tournament selection, order crossover and
/// swap / reversal / break-shift mutations. Deterministic for a fixed seed.
inline Schedule mtsp_solve(const std::vector<Vec>& pts, int agents, const GaOptions& opt = {}) {
  using detail::Chromosome;
  const int M = static_cast<int>(pts.size());
  if (M < 1 || agents < 1) throw std::invalid_argument("mtsp_solve: need at least one target and one agent");
  std::mt19937_64 rng(opt.seed);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  auto random_breaks = [&]() {
    std::vector<int> b(static_cast<std::size_t>(agents - 1));
    for (auto& x : b) x = uni(0, M);
    std::sort(b.begin(), b.end());
    return b;
  };
  const int pop = std::max(2, opt.population);
  std::vector<Chromosome> popu(static_cast<std::size_t>(pop));
  for (auto& c : popu) {
    c.perm.resize(static_cast<std::size_t>(M));
    std::iota(c.perm.begin(), c.perm.end(), 0);
    std::shuffle(c.perm.begin(), c.perm.end(), rng);
    c.breaks = random_breaks();
    detail::score(c, pts, agents);
  }
  auto by_fitness = [](const Chromosome& a, const Chromosome& b) { return detail::better(a, b); };
  std::stable_sort(popu.begin(), popu.end(), by_fitness);

  auto select = [&]() -> const Chromosome& {
    int best = uni(0, pop - 1);
    for (int t = 1; t < opt.tournament; ++t) {
      const int c = uni(0, pop - 1);
      if (detail::better(popu[static_cast<std::size_t>(c)], popu[static_cast<std::size_t>(best)])) best = c;
    }
    return popu[static_cast<std::size_t>(best)];
  };

  auto order_crossover = [&](const std::vector<int>& p1, const std::vector<int>& p2) {
    if (M < 2) return p1;
    int i = uni(0, M - 1), k = uni(0, M - 1);
    if (i > k) std::swap(i, k);
    std::vector<int> child(static_cast<std::size_t>(M), -1);
    std::vector<char> used(static_cast<std::size_t>(M), 0);
    for (int x = i; x <= k; ++x) {
      child[static_cast<std::size_t>(x)] = p1[static_cast<std::size_t>(x)];
      used[static_cast<std::size_t>(p1[static_cast<std::size_t>(x)])] = 1;
    }
    int pos = (k + 1) % M;
    for (int off = 0; off < M; ++off) {
      const int g = p2[static_cast<std::size_t>((k + 1 + off) % M)];
      if (used[static_cast<std::size_t>(g)]) continue;
      child[static_cast<std::size_t>(pos)] = g;
      pos = (pos + 1) % M;
    }
    return child;
  };

  Schedule history;
  const int elite = std::max(1, static_cast<int>(opt.elite_fraction * pop));
  for (int gen = 0; gen < opt.generations; ++gen) {
    if (opt.record_history) history.history.push_back(popu.front().max_len);
    std::vector<Chromosome> next(popu.begin(), popu.begin() + elite);
    while (static_cast<int>(next.size()) < pop) {
      const Chromosome& a = select();
      const Chromosome& b = select();
      Chromosome c;
      c.perm = order_crossover(a.perm, b.perm);
      c.breaks = coin(0.5) ? a.breaks : b.breaks;
      if (M >= 2 && coin(opt.swap_rate)) std::swap(c.perm[static_cast<std::size_t>(uni(0, M - 1))], c.perm[static_cast<std::size_t>(uni(0, M - 1))]);
      if (M >= 2 && coin(opt.reversal_rate)) {
        int i = uni(0, M - 1), k = uni(0, M - 1);
        if (i > k) std::swap(i, k);
        std::reverse(c.perm.begin() + i, c.perm.begin() + k + 1);
      }
      if (agents > 1 && coin(opt.break_rate)) {
        c.breaks[static_cast<std::size_t>(uni(0, agents - 2))] = uni(0, M);
        std::sort(c.breaks.begin(), c.breaks.end());
      }
      detail::score(c, pts, agents);
      next.push_back(std::move(c));
    }
    std::stable_sort(next.begin(), next.end(), by_fitness);
    popu = std::move(next);
  }
  if (opt.record_history) history.history.push_back(popu.front().max_len);

  Schedule s = make_schedule(pts, detail::split(popu.front(), agents));
  s.history = std::move(history.history);
  return s;
}

}  // namespace pmon
