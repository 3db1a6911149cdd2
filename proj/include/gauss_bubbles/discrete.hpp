#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/gauss_core.hpp"

namespace gb {

/// Largest table (m^n entries) evaluated exactly.
inline constexpr std::uint64_t kExactCapacity = 10'000'000;

/// m^n, throwing CapacityError above kExactCapacity.
std::size_t cube_size(int m, int n);

/// Coordinates of a table index, each in 0..m-1, omega_1 most significant.
std::vector<int> cube_point(std::size_t index, int m, int n);
std::size_t cube_index(std::span<const int> point, int m);

/// Per-coordinate resampling kernel on {1..m}: keep the symbol with
/// probability (1 + (m-1) rho)/m, otherwise move to each other symbol with
/// probability (1 - rho)/m. Admissible for rho in [-1/(m-1), 1].
class NoiseKernel {
 public:
  enum class Convention {
    normalized,
    /// Stay probability (1 - (m-1) rho)/m. It only sums to one at rho = 0,
    /// so construction fails for any other rho.
    unnormalized,
  };

  NoiseKernel(int m, double rho, Convention convention = Convention::normalized);

  int alphabet() const { return m_; }
  double rho() const { return rho_; }
  double stay() const { return stay_; }
  double move() const { return move_; }
  /// m x m transition matrix.
  Eigen::MatrixXd matrix() const;

 private:
  int m_;
  double rho_;
  double stay_;
  double move_;
};

struct InfluenceReport {
  double mean = 0.0;          // E g
  Eigen::VectorXd averaged;   // E_i g over the other n-1 coordinates, m^{n-1} entries
  double influence = 0.0;     // E (g - E_i g)^2
};

/// Coordinate i is 0-based. Throws DomainError when i is out of range.
InfluenceReport influences(const Eigen::VectorXd& g, int m, int n, int i);

/// E_rho g, one coordinate at a time: along each coordinate the kernel acts
/// as rho * g + (1 - rho) * (average over that coordinate).
Eigen::VectorXd apply_noise_kernel(const Eigen::VectorXd& g, int m, int n,
                                   const NoiseKernel& kernel);

/// f: {1..m}^n -> Delta_m stored as an m^n x m table, rows in lexicographic
/// order of (omega_1, ..., omega_n).
class DiscreteFunction {
 public:
  DiscreteFunction(int m, int n, Eigen::MatrixXd table);

  int alphabet() const { return m_; }
  int voters() const { return n_; }
  const Eigen::MatrixXd& table() const { return table_; }
  Eigen::VectorXd coordinate(int j) const { return table_.col(j); }

 private:
  int m_;
  int n_;
  Eigen::MatrixXd table_;
};

/// Strict plurality winner gets e_j; any tie for the top count maps to the
/// barycenter (1/m, ..., 1/m).
DiscreteFunction plurality_function(int m, int n);

/// f(omega) = e_{omega_1}.
DiscreteFunction dictator_function(int m, int n);

struct DiscreteStability {
  double total = 0.0;                  // S_rho f = sum_j S_rho f_j
  Eigen::VectorXd per_coordinate;      // S_rho f_j = E[f_j E_rho f_j]
  double std_error = 0.0;              // 0 for exact evaluation
};

DiscreteStability discrete_noise_stability(const DiscreteFunction& f, double rho,
                                           NoiseKernel::Convention convention =
                                               NoiseKernel::Convention::normalized);

/// S_rho g for a real table.
double noise_stability(const Eigen::VectorXd& g, int m, int n, const NoiseKernel& kernel);

/// Rule evaluated on a vote vector (entries 0..m-1), writing a point of Delta_m.
using VotingRule = std::function<void(std::span<const int> votes, Eigen::Ref<Eigen::VectorXd> out)>;

/// Monte Carlo S_rho f = E <f(omega), f(delta)>: omega uniform, each delta_i
/// drawn from the kernel row of omega_i. Uses cfg.sample_count, chunk_size,
/// seed and antithetic = false; cfg.dimension is ignored.
DiscreteStability discrete_noise_stability_mc(int m, int n, const VotingRule& rule,
                                              const NoiseKernel& kernel,
                                              const IntegrationConfig& cfg);

struct CltCrosscheck {
  double discrete = 0.0;  // MC estimate of S_rho MAJ_n
  double std_error = 0.0;
  double gaussian = 0.0;  // 1/2 + arcsin(rho)/pi
  double gap = 0.0;       // discrete - gaussian
};

/// Majority on n (odd) binary voters against its Gaussian limit.
CltCrosscheck clt_crosscheck(int n, double rho, const IntegrationConfig& cfg);

}  // namespace gb
