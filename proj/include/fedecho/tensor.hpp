#ifndef FEDECHO_TENSOR_HPP
#define FEDECHO_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedecho {

// Raised for invalid shapes, out-of-range hyperparameters and malformed
// configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a model or gradient stops being finite. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::int64_t round)
      : std::runtime_error(what), round_(round) {}
  std::int64_t round() const { return round_; }

 private:
  std::int64_t round_;
};

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Row-major f64 matrix; rows are samples throughout the library.
using DenseMatrix = Matrix<double>;
using DenseVector = Vector<double>;

// Raw pre-softmax model outputs, one row per sample.
using Logits = DenseMatrix;

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: dimension mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " times " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
  return a * b;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace fedecho

#endif  // FEDECHO_TENSOR_HPP
