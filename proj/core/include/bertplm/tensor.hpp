#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bertplm/errors.hpp"

namespace bertplm::ad {

using Dims = std::vector<std::size_t>;

std::string to_string(const Dims& dims);

/// Globally toggles rejection of NaN/Inf values when tensors are built from
/// caller-supplied data. On by default.
void set_checked_mode(bool on);
bool checked_mode();

/// Dense row-major array of doubles.
///
/// Storage is shared between copies and treated as immutable; mutable_data()
/// detaches a private copy first, so a Tensor behaves like a value.
class Tensor {
 public:
  /// Rank-0 zero.
  Tensor();
  /// Zero-filled tensor of the given dims.
  explicit Tensor(Dims dims);
  Tensor(Dims dims, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor filled(Dims dims, double value);
  /// Same as Tensor(dims, data) without the finiteness check. For op results
  /// that may legitimately hold -inf (masked scores).
  static Tensor unchecked(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_->size(); }
  /// Product of all leading dims; 1 for rank 0 and 1.
  std::size_t rows() const;
  /// Trailing dim; 1 for rank 0.
  std::size_t cols() const;

  std::span<const double> data() const { return *data_; }
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }
  double item() const;

  std::span<const double> row(std::size_t r) const {
    return data().subspan(r * cols(), cols());
  }

  Tensor reshaped(Dims dims) const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

 private:
  Dims dims_;
  std::shared_ptr<std::vector<double>> data_;
};

std::size_t element_count(const Dims& dims);

/// Largest |a_i - b_i|; throws ShapeError on mismatched dims.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace bertplm::ad
