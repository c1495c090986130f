#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/sobol.hpp>

#include "msbo/random.hpp"

namespace msbo {

/// Sobol low-discrepancy sequence in [0,1)^dim with an optional digital shift.
/// A shift of zero yields the plain sequence (first point is (1/2, ..., 1/2));
/// a non-zero shift seed XORs every coordinate with a fixed random word, which
/// keeps the net structure while giving each seed its own design.
class SobolSequence {
 public:
  explicit SobolSequence(std::size_t dim, std::uint64_t shift_seed = 0)
      : dim_(dim), engine_(static_cast<unsigned>(dim == 0 ? 1 : dim)), shift_(dim == 0 ? 1 : dim, 0) {
    if (dim == 0) throw std::invalid_argument("SobolSequence: dimension must be >= 1");
    if (shift_seed != 0) {
      StreamRng rng(shift_seed);
      for (auto& s : shift_) s = rng();
    }
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

  Eigen::VectorXd next() {
    Eigen::VectorXd p(static_cast<Eigen::Index>(dim_));
    for (std::size_t j = 0; j < dim_; ++j) {
      const std::uint64_t v = engine_() ^ shift_[j];
      p(static_cast<Eigen::Index>(j)) = static_cast<double>(v >> 11) * 0x1.0p-53;
    }
    return p;
  }

  /// n points as rows of an n x dim matrix.
  Eigen::MatrixXd draw(std::size_t n) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = next().transpose();
    return out;
  }

 private:
  std::size_t dim_;
  boost::random::sobol_engine<std::uint64_t, 64> engine_;
  std::vector<std::uint64_t> shift_;
};

}  // namespace msbo
