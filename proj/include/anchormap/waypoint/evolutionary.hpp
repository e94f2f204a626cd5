#ifndef ANCHORMAP_WAYPOINT_EVOLUTIONARY_HPP_
#define ANCHORMAP_WAYPOINT_EVOLUTIONARY_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "anchormap/waypoint/gdop.hpp"
#include "anchormap/waypoint/volume.hpp"

namespace anchormap
{
struct EvoConfig
{
  int population_size = 40;
  int max_generations = 2000;
  double crossover_prob = 0.6;
  double mutation_prob = 0.3;
  double elitism_prob = 0.1;
  std::uint64_t rng_seed = 1;
  /// stop after this many generations without improving the best cost by more than stall_tol
  int stall_generations = 200;
  double stall_tol = 1e-6;

  void validate() const
  {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (population_size < 2 || max_generations < 1 || !prob(crossover_prob) || !prob(mutation_prob) ||
        !prob(elitism_prob))
      throw Error(ErrorCode::InvalidArgument, "invalid evolutionary configuration");
  }
};

/// Lattice index (x, y, z) of one waypoint inside its subcube.
using Gene = std::array<int, 3>;

/// One gene per waypoint / subcube, i.e. the 3 x n_p index matrix stored column-wise.
struct Chromosome
{
  std::vector<Gene> genes;

  bool operator==(const Chromosome&) const = default;
};

inline std::vector<Vec3> decode(const FlightVolume& volume, const Chromosome& c)
{
  std::vector<Vec3> pts;
  pts.reserve(c.genes.size());
  for (std::size_t j = 0; j < c.genes.size(); ++j)
    pts.push_back(volume.grid_point(static_cast<int>(j), c.genes[j]));
  return pts;
}

template <class Rng>
Gene random_gene(const FlightVolume& volume, Rng& rng)
{
  Gene g{};
  for (int k = 0; k < 3; ++k)
    g[k] = std::uniform_int_distribution<int>(0, volume.resolution[k] - 1)(rng);
  return g;
}

template <class Rng>
Chromosome random_chromosome(const FlightVolume& volume, Rng& rng)
{
  Chromosome c;
  c.genes.resize(static_cast<std::size_t>(volume.waypoint_count()));
  for (auto& g : c.genes)
    g = random_gene(volume, rng);
  return c;
}

/// Greedy nearest-neighbour visiting order starting from `start`.
inline std::vector<Vec3> nearest_neighbor_order(std::vector<Vec3> points, const Vec3& start)
{
  std::vector<Vec3> ordered;
  ordered.reserve(points.size());
  Vec3 cur = start;
  while (!points.empty())
  {
    auto it = std::min_element(points.begin(), points.end(), [&](const Vec3& a, const Vec3& b) {
      return (a - cur).squaredNorm() < (b - cur).squaredNorm();
    });
    cur = *it;
    ordered.push_back(cur);
    points.erase(it);
  }
  return ordered;
}

struct EvoResult
{
  /// optimal waypoints in nearest-neighbour visiting order from tag_start
  std::vector<Vec3> waypoints;
  Chromosome best;
  double final_cost = kInfeasibleCost;
  int generations = 0;
  /// best cost in the population at each generation (index 0 = initial population)
  std::vector<double> best_cost_history;
};

///
/// \brief Grid-based evolutionary search for the waypoint set minimizing the mean GDOP.
///
/// Each generation keeps the elite fraction unchanged, fills the rest with children of
/// roulette-selected parents (weights 1 / cost), applies per-gene uniform crossover and
/// per-gene re-draw mutation. Randomness is consumed only here, sequentially, so the
/// result is a pure function of the inputs and rng_seed.
///
inline EvoResult optimize_waypoints(const FlightVolume& volume, std::span<const Vec3> anchor_estimates,
                                    const Vec3& tag_start, const EvoConfig& config)
{
  volume.validate();
  config.validate();
  if (anchor_estimates.empty())
    throw Error(ErrorCode::InvalidArgument, "no anchor estimates");

  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto cost_of = [&](const Chromosome& c) { return objective(decode(volume, c), anchor_estimates, volume); };

  EvoResult res;
  const bool single_point = volume.resolution == std::array<int, 3>{1, 1, 1};
  if (single_point)
  {
    res.best = random_chromosome(volume, rng);
    res.final_cost = cost_of(res.best);
    res.best_cost_history.push_back(res.final_cost);
  }
  else
  {
    const auto pop_size = static_cast<std::size_t>(config.population_size);
    std::vector<Chromosome> pop(pop_size);
    std::vector<double> cost(pop_size);
    for (std::size_t i = 0; i < pop_size; ++i)
    {
      pop[i] = random_chromosome(volume, rng);
      cost[i] = cost_of(pop[i]);
    }

    const std::size_t n_elite =
        config.elitism_prob > 0.0
            ? std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.elitism_prob * pop_size)), 1, pop_size)
            : 0;

    std::vector<std::size_t> order(pop_size);
    auto rank = [&] {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
    };
    rank();
    double best = cost[order[0]];
    res.best = pop[order[0]];
    res.best_cost_history.push_back(best);
    double last_improving = best;
    int stall = 0;

    for (int gen = 1; gen <= config.max_generations; ++gen)
    {
      // mating selection
      std::vector<double> weights(pop_size);
      for (std::size_t i = 0; i < pop_size; ++i)
        weights[i] = 1.0 / cost[i];
      std::discrete_distribution<std::size_t> roulette(weights.begin(), weights.end());

      std::vector<Chromosome> next;
      std::vector<double> next_cost;
      next.reserve(pop_size);
      next_cost.reserve(pop_size);
      for (std::size_t e = 0; e < n_elite; ++e)
      {
        next.push_back(pop[order[e]]);
        next_cost.push_back(cost[order[e]]);
      }

      // variation
      while (next.size() < pop_size)
      {
        Chromosome a = pop[roulette(rng)];
        Chromosome b = pop[roulette(rng)];
        for (std::size_t j = 0; j < a.genes.size(); ++j)
          if (unit(rng) < config.crossover_prob)
            std::swap(a.genes[j], b.genes[j]);
        for (Chromosome* child : {&a, &b})
        {
          for (auto& g : child->genes)
            if (unit(rng) < config.mutation_prob)
              g = random_gene(volume, rng);
          if (next.size() < pop_size)
          {
            next_cost.push_back(cost_of(*child));
            next.push_back(std::move(*child));
          }
        }
      }
      pop = std::move(next);
      cost = std::move(next_cost);
      rank();

      if (cost[order[0]] < best)
      {
        best = cost[order[0]];
        res.best = pop[order[0]];
      }
      res.best_cost_history.push_back(cost[order[0]]);
      res.generations = gen;

      if (last_improving - best > config.stall_tol)
      {
        last_improving = best;
        stall = 0;
      }
      else if (++stall >= config.stall_generations)
        break;
    }
    res.final_cost = best;
  }

  if (res.final_cost >= kInfeasibleCost)
    throw Error(ErrorCode::NoFeasibleSolution, "every sampled waypoint set is infeasible or singular");
  res.waypoints = nearest_neighbor_order(decode(volume, res.best), tag_start);
  return res;
}

}  // namespace anchormap

#endif  // ANCHORMAP_WAYPOINT_EVOLUTIONARY_HPP_
