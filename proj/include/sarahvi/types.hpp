#ifndef SARAHVI_TYPES_HPP
#define SARAHVI_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sarahvi {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A point in the joint space. For saddle problems the first half holds x,
/// the second half y.
template <typename Scalar>
using Point = Vector<Scalar>;

/// Counts single-component operator evaluations. A full pass over the sum is
/// charged as n component calls and also tallied in `full_passes`.
struct OracleCounter {
  std::uint64_t component_calls = 0;
  std::uint64_t full_passes = 0;
};

class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what, Eigen::Index expected,
                 Eigen::Index got)
      : std::invalid_argument(what + ": expected dimension " +
                              std::to_string(expected) + ", got " +
                              std::to_string(got)),
        expected_(expected),
        got_(got) {}

  Eigen::Index expected() const { return expected_; }
  Eigen::Index got() const { return got_; }

 private:
  Eigen::Index expected_;
  Eigen::Index got_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace sarahvi

#endif
