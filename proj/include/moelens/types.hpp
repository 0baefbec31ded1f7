#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace moelens {

/// Row-major dense matrix. All weight tensors and activations use this layout
/// so that the serialized payload order matches the in-memory order.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;
using CountMatrix = Matrix<std::int64_t>;
using KeepMatrix = Matrix<bool>;

using TokenId = std::int32_t;

/// Invalid or inconsistent data: malformed files, shape mismatches,
/// out-of-range values. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace moelens
