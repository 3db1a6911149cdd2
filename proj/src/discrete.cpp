#include "gauss_bubbles/discrete.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gauss_bubbles/parallel.hpp"
#include "gauss_bubbles/rng.hpp"

namespace gb {

std::size_t cube_size(int m, int n) {
  if (m < 1 || n < 1) throw DomainError("cube needs m >= 1 and n >= 1");
  std::uint64_t size = 1;
  for (int i = 0; i < n; ++i) {
    size *= static_cast<std::uint64_t>(m);
    if (size > kExactCapacity) {
      throw CapacityError("table with " + std::to_string(m) + "^" + std::to_string(n) +
                          " entries exceeds the exact-evaluation capacity");
    }
  }
  return static_cast<std::size_t>(size);
}

std::vector<int> cube_point(std::size_t index, int m, int n) {
  std::vector<int> point(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    point[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::size_t>(m));
    index /= static_cast<std::size_t>(m);
  }
  return point;
}

std::size_t cube_index(std::span<const int> point, int m) {
  std::size_t index = 0;
  for (const int symbol : point) index = index * static_cast<std::size_t>(m) + static_cast<std::size_t>(symbol);
  return index;
}

NoiseKernel::NoiseKernel(int m, double rho, Convention convention) : m_(m), rho_(rho) {
  if (m < 2) throw DomainError("kernel alphabet needs m >= 2");
  if (!(rho >= -1.0 / (m - 1) && rho <= 1.0)) {
    throw DomainError("rho must lie in [-1/(m-1), 1] for the kernel to be a probability");
  }
  move_ = (1.0 - rho) / m;
  if (convention == Convention::unnormalized) {
    stay_ = (1.0 - (m - 1) * rho) / m;
    if (std::abs(stay_ + (m - 1) * move_ - 1.0) > 1e-15) {
      throw DomainError("stay probability (1-(m-1)rho)/m with move probability (1-rho)/m "
                        "does not sum to 1 unless rho = 0");
    }
  } else {
    stay_ = (1.0 + (m - 1) * rho) / m;
  }
}

Eigen::MatrixXd NoiseKernel::matrix() const {
  Eigen::MatrixXd k = Eigen::MatrixXd::Constant(m_, m_, move_);
  k.diagonal().setConstant(stay_);
  return k;
}

namespace {

void check_table(const Eigen::VectorXd& g, int m, int n) {
  if (static_cast<std::size_t>(g.size()) != cube_size(m, n)) {
    throw ContractViolation("table length must be m^n");
  }
}

std::size_t power(int m, int e) {
  std::size_t p = 1;
  for (int i = 0; i < e; ++i) p *= static_cast<std::size_t>(m);
  return p;
}

}  // namespace

InfluenceReport influences(const Eigen::VectorXd& g, int m, int n, int i) {
  check_table(g, m, n);
  if (i < 0 || i >= n) throw DomainError("coordinate index out of range");
  const std::size_t inner = power(m, n - 1 - i);
  const std::size_t outer = power(m, i);
  InfluenceReport r;
  r.mean = g.mean();
  r.averaged.resize(static_cast<Eigen::Index>(outer * inner));
  double sq = 0.0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double avg = 0.0;
      for (int s = 0; s < m; ++s) {
        avg += g(static_cast<Eigen::Index>((o * static_cast<std::size_t>(m) + static_cast<std::size_t>(s)) * inner + in));
      }
      avg /= m;
      r.averaged(static_cast<Eigen::Index>(o * inner + in)) = avg;
      for (int s = 0; s < m; ++s) {
        const double dev =
            g(static_cast<Eigen::Index>((o * static_cast<std::size_t>(m) + static_cast<std::size_t>(s)) * inner + in)) - avg;
        sq += dev * dev;
      }
    }
  }
  r.influence = sq / static_cast<double>(g.size());
  return r;
}

Eigen::VectorXd apply_noise_kernel(const Eigen::VectorXd& g, int m, int n,
                                   const NoiseKernel& kernel) {
  check_table(g, m, n);
  if (kernel.alphabet() != m) throw ContractViolation("kernel alphabet does not match the table");
  const double keep = kernel.stay() - kernel.move();
  const double spread = m * kernel.move();
  Eigen::VectorXd out = g;
  for (int i = 0; i < n; ++i) {
    const std::size_t inner = power(m, n - 1 - i);
    const std::size_t outer = power(m, i);
    const std::size_t stride = static_cast<std::size_t>(m) * inner;
    auto body = [&](std::uint64_t o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * stride + in;
        double avg = 0.0;
        for (int s = 0; s < m; ++s) avg += out(static_cast<Eigen::Index>(base + static_cast<std::size_t>(s) * inner));
        avg /= m;
        for (int s = 0; s < m; ++s) {
          double& v = out(static_cast<Eigen::Index>(base + static_cast<std::size_t>(s) * inner));
          v = keep * v + spread * avg;
        }
      }
      return 0;
    };
    map_indices<int>(outer, body);
  }
  return out;
}

double noise_stability(const Eigen::VectorXd& g, int m, int n, const NoiseKernel& kernel) {
  return g.dot(apply_noise_kernel(g, m, n, kernel)) / static_cast<double>(g.size());
}

DiscreteFunction::DiscreteFunction(int m, int n, Eigen::MatrixXd table)
    : m_(m), n_(n), table_(std::move(table)) {
  if (m < 2) throw DomainError("discrete functions need m >= 2");
  if (static_cast<std::size_t>(table_.rows()) != cube_size(m, n) || table_.cols() != m) {
    throw ContractViolation("table must have m^n rows and m columns");
  }
  for (Eigen::Index r = 0; r < table_.rows(); ++r) {
    if (!(table_.row(r).minCoeff() >= 0.0) || std::abs(table_.row(r).sum() - 1.0) > 1e-12) {
      throw DomainError("row " + std::to_string(r) + " is not a point of the simplex");
    }
  }
}

DiscreteFunction plurality_function(int m, int n) {
  if (m < 2 || n < 1) throw DomainError("plurality needs m >= 2 and n >= 1");
  const std::size_t size = cube_size(m, n);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size), m);
  std::vector<int> counts(static_cast<std::size_t>(m));
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const int s : cube_point(idx, m, n)) ++counts[static_cast<std::size_t>(s)];
    int best = 0;
    bool tie = false;
    for (int s = 1; s < m; ++s) {
      if (counts[static_cast<std::size_t>(s)] > counts[static_cast<std::size_t>(best)]) {
        best = s;
        tie = false;
      } else if (counts[static_cast<std::size_t>(s)] == counts[static_cast<std::size_t>(best)]) {
        tie = true;
      }
    }
    if (tie) {
      table.row(static_cast<Eigen::Index>(idx)).setConstant(1.0 / m);
    } else {
      table(static_cast<Eigen::Index>(idx), best) = 1.0;
    }
  }
  return {m, n, std::move(table)};
}

DiscreteFunction dictator_function(int m, int n) {
  const std::size_t size = cube_size(m, n);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size), m);
  const std::size_t stride = power(m, n - 1);
  for (std::size_t idx = 0; idx < size; ++idx) {
    table(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(idx / stride)) = 1.0;
  }
  return {m, n, std::move(table)};
}

DiscreteStability discrete_noise_stability(const DiscreteFunction& f, double rho,
                                           NoiseKernel::Convention convention) {
  const NoiseKernel kernel(f.alphabet(), rho, convention);
  DiscreteStability out;
  out.per_coordinate.resize(f.alphabet());
  for (int j = 0; j < f.alphabet(); ++j) {
    out.per_coordinate(j) = noise_stability(f.table().col(j), f.alphabet(), f.voters(), kernel);
  }
  out.total = out.per_coordinate.sum();
  return out;
}

DiscreteStability discrete_noise_stability_mc(int m, int n, const VotingRule& rule,
                                              const NoiseKernel& kernel,
                                              const IntegrationConfig& cfg) {
  if (kernel.alphabet() != m) throw ContractViolation("kernel alphabet does not match m");
  if (n < 1 || n >= (1 << 16)) throw DomainError("voter count must lie in [1, 65535]");
  IntegrationConfig plain = cfg;
  plain.antithetic = false;
  plain.validate();
  const Philox4x32 gen(plain.seed);
  const double stay = kernel.stay();
  const Estimate e = reduce_chunks(plain, 1, [&](std::uint64_t chunk) {
    const auto n_samples = static_cast<Eigen::Index>(plain.chunk_size);
    Eigen::MatrixXd values(1, n_samples);
    std::vector<int> omega(static_cast<std::size_t>(n)), delta(static_cast<std::size_t>(n));
    Eigen::VectorXd fo(m), fd(m);
    const auto chunk_lo = static_cast<std::uint32_t>(chunk);
    const auto chunk_hi = static_cast<std::uint32_t>(chunk >> 32);
    for (Eigen::Index j = 0; j < n_samples; ++j) {
      for (int i = 0; i < n; ++i) {
        const auto word = (stream_id(Stream::discrete) << 16) | static_cast<std::uint32_t>(i);
        const auto r = gen({word, static_cast<std::uint32_t>(j), chunk_lo, chunk_hi});
        const int w = static_cast<int>((std::uint64_t{r[0]} * static_cast<std::uint64_t>(m)) >> 32);
        int d = w;
        if (!(uniform_open(r[1], r[2]) < stay)) {
          const int k = static_cast<int>((std::uint64_t{r[3]} * static_cast<std::uint64_t>(m - 1)) >> 32);
          d = k < w ? k : k + 1;
        }
        omega[static_cast<std::size_t>(i)] = w;
        delta[static_cast<std::size_t>(i)] = d;
      }
      rule(omega, fo);
      rule(delta, fd);
      values(0, j) = fo.dot(fd);
    }
    return values;
  });
  DiscreteStability out;
  out.total = e.mean(0);
  out.std_error = e.std_error(0);
  return out;
}

CltCrosscheck clt_crosscheck(int n, double rho, const IntegrationConfig& cfg) {
  if (n < 1 || n % 2 == 0) {
    throw DomainError("majority cross-check needs an odd number of voters (ties unsupported)");
  }
  if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("rho must lie in [-1, 1]");
  const NoiseKernel kernel(2, rho);
  const VotingRule majority = [](std::span<const int> votes, Eigen::Ref<Eigen::VectorXd> out) {
    std::size_t ones = 0;
    for (const int v : votes) ones += static_cast<std::size_t>(v);
    const bool second = 2 * ones > votes.size();
    out << (second ? 0.0 : 1.0), (second ? 1.0 : 0.0);
  };
  const DiscreteStability mc = discrete_noise_stability_mc(2, n, majority, kernel, cfg);
  CltCrosscheck out;
  out.discrete = mc.total;
  out.std_error = mc.std_error;
  out.gaussian = 0.5 + std::asin(rho) / std::numbers::pi;
  out.gap = out.discrete - out.gaussian;
  return out;
}

}  // namespace gb
