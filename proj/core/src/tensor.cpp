#include "bertplm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace bertplm::ad {

namespace {
std::atomic<bool> g_checked{true};
}

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(); }

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Dims dims)
    : dims_(std::move(dims)), data_(std::make_shared<std::vector<double>>(element_count(dims_), 0.0)) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(dims_));
  }
}

Tensor::Tensor(Dims dims, std::vector<double> data) : Tensor(unchecked(std::move(dims), std::move(data))) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(dims_));
  }
  if (checked_mode() && !all_finite()) throw ContractError("tensor contains NaN or Inf");
}

Tensor Tensor::unchecked(Dims dims, std::vector<double> data) {
  if (element_count(dims) != data.size()) {
    throw ShapeError("dims " + to_string(dims) + " do not match " + std::to_string(data.size()) +
                     " elements");
  }
  Tensor t;
  t.dims_ = std::move(dims);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor(Dims{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Dims{n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Dims{r, c}, std::move(data));
}

Tensor Tensor::filled(Dims dims, double value) {
  const auto n = element_count(dims);
  return Tensor(std::move(dims), std::vector<double>(n, value));
}

std::size_t Tensor::rows() const {
  if (dims_.size() <= 1) return 1;
  return element_count(Dims(dims_.begin(), dims_.end() - 1));
}

std::size_t Tensor::cols() const { return dims_.empty() ? 1 : dims_.back(); }

std::span<double> Tensor::mutable_data() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return *data_;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of dims " + to_string(dims_));
  return (*data_)[0];
}

Tensor Tensor::reshaped(Dims dims) const {
  if (element_count(dims) != size()) {
    throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
  }
  Tensor t = *this;
  t.dims_ = std::move(dims);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_->begin(), data_->end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("max_abs_diff: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace bertplm::ad
