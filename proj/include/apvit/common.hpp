#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace apvit {

// Token sequences and weight matrices are row-major: one row per token.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

// Error taxonomy, mapped to CLI exit codes (usage=2, data=3, numerical=4).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : UsageError {
  using UsageError::UsageError;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single RNG type used everywhere so that a seed pins the whole run.
using Rng = std::mt19937_64;

inline double normal_draw(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

template <class S>
void fill_normal(Mat<S>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<S>(normal_draw(rng, 0.0, stddev));
}

inline std::int64_t iround(double x) { return std::llround(x); }

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace apvit
