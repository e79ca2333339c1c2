#pragma once

#include "skelcover/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace skelcover {

enum class TourSemantics { ClosedATSP, OpenPath };

// Dense non-negative cost matrix; kInf marks forbidden arcs.
struct CostMatrix {
  int n = 0;
  std::vector<double> costs;
  TourSemantics semantics = TourSemantics::ClosedATSP;

  CostMatrix() = default;
  CostMatrix(int size, TourSemantics sem)
      : n(size), costs(std::size_t(size) * size, 0.0), semantics(sem) {}

  double& at(int i, int j) { return costs[std::size_t(i) * n + j]; }
  double at(int i, int j) const { return costs[std::size_t(i) * n + j]; }
  void validate() const;
};

struct Tour {
  std::vector<int> order;
  double cost = 0.0;
};

// Sum of arcs along order under the matrix semantics (closing arc included
// for ClosedATSP); kInf if any arc is forbidden.
double tour_cost(const CostMatrix& matrix, const std::vector<int>& order);

// Exhaustive minimum over permutations with start fixed at 0 (and end fixed
// at n-1 for OpenPath); ties broken lexicographically.
Tour brute_force(const CostMatrix& matrix);

struct SolveParams {
  // Evaluated-move budget is budget_factor * n^2.
  int budget_factor = 50;
  // When set, receives the cost after the initial construction and after
  // each accepted move of the descent that produced the returned tour.
  std::vector<double>* trace = nullptr;
};

Tour solve(const CostMatrix& matrix, std::uint64_t seed,
           const SolveParams& params = {});

void write_cost_matrix(std::ostream& os, const CostMatrix& matrix);

}  // namespace skelcover
