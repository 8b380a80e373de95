#include "bertplm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bertplm/rng.hpp"

namespace bertplm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(std::span<const double> s, std::size_t r, std::size_t c) {
  return ConstMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MutMap mmap(std::span<double> s, std::size_t r, std::size_t c) {
  return MutMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw ContractError("operands live on different tapes");
  return t;
}

void require_rank2(const Var& v, const char* op) {
  if (v.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(v.dims()));
  }
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
}

template <class F>
Tensor map_values(const Var& x, F&& f) {
  const auto in = x.value().data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Tensor::unchecked(x.dims(), std::move(out));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  if (b.dims()[0] != k) {
    throw ShapeError("matmul: inner dims differ, " + to_string(a.dims()) + " x " + to_string(b.dims()));
  }
  std::vector<double> out(m * n);
  mmap(out, m, n).noalias() = cmap(a.value().data(), m, k) * cmap(b.value().data(), k, n);

  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [av = a.value(), bv = b.value(), m, k, n](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        mmap(ga, m, k).noalias() += cmap(g, m, n) * cmap(bv.data(), k, n).transpose();
      }
      if (auto gb = sink.grad(1); !gb.empty()) {
        mmap(gb, k, n).noalias() += cmap(av.data(), m, k).transpose() * cmap(g, m, n);
      }
    };
  }
  return tape.push("matmul", Tensor::unchecked({m, n}, std::move(out)), {a.id(), b.id()}, std::move(fn));
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[0];
  if (b.dims()[1] != k) {
    throw ShapeError("matmul_nt: inner dims differ, " + to_string(a.dims()) + " x " +
                     to_string(b.dims()) + "^T");
  }
  std::vector<double> out(m * n);
  mmap(out, m, n).noalias() = cmap(a.value().data(), m, k) * cmap(b.value().data(), n, k).transpose();

  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [av = a.value(), bv = b.value(), m, k, n](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        mmap(ga, m, k).noalias() += cmap(g, m, n) * cmap(bv.data(), n, k);
      }
      if (auto gb = sink.grad(1); !gb.empty()) {
        mmap(gb, n, k).noalias() += cmap(g, m, n).transpose() * cmap(av.data(), m, k);
      }
    };
  }
  return tape.push("matmul_nt", Tensor::unchecked({m, n}, std::move(out)), {a.id(), b.id()},
                   std::move(fn));
}

Var add(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_same(a, b, "add");
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [](std::span<const double> g, GradSink& sink) {
      for (std::size_t slot = 0; slot < 2; ++slot) {
        if (auto gi = sink.grad(slot); !gi.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      }
    };
  }
  return tape.push("add", Tensor::unchecked(a.dims(), std::move(out)), {a.id(), b.id()}, std::move(fn));
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_same(a, b, "sub");
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (auto gb = sink.grad(1); !gb.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return tape.push("sub", Tensor::unchecked(a.dims(), std::move(out)), {a.id(), b.id()}, std::move(fn));
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_same(a, b, "mul");
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [av = a.value(), bv = b.value()](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (auto gb = sink.grad(1); !gb.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return tape.push("mul", Tensor::unchecked(a.dims(), std::move(out)), {a.id(), b.id()}, std::move(fn));
}

Var scale(const Var& a, double s) {
  Tape& tape = tape_of(a);
  const auto x = a.value().data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  BackwardFn fn;
  if (tape.any_requires_grad({a})) {
    fn = [s](std::span<const double> g, GradSink& sink) {
      auto ga = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
  }
  return tape.push("scale", Tensor::unchecked(a.dims(), std::move(out)), {a.id()}, std::move(fn));
}

Var add_row(const Var& a, const Var& row) {
  Tape& tape = tape_of(a, row);
  const std::size_t r = a.rows(), c = a.cols();
  if (row.size() != c) {
    throw ShapeError("add_row: row of " + to_string(row.dims()) + " vs operand " + to_string(a.dims()));
  }
  const auto x = a.value().data(), v = row.value().data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + v[j];
  }
  BackwardFn fn;
  if (tape.any_requires_grad({a, row})) {
    fn = [r, c](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (auto gv = sink.grad(1); !gv.empty()) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
        }
      }
    };
  }
  return tape.push("add_row", Tensor::unchecked(a.dims(), std::move(out)), {a.id(), row.id()},
                   std::move(fn));
}

Var gelu(const Var& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tape& tape = tape_of(x);
  Tensor out = map_values(x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); });
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [xv = x.value()](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kC * (v + kA * v * v * v));
        const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
        gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    };
  }
  return tape.push("gelu", std::move(out), {x.id()}, std::move(fn));
}

Var log(const Var& x) {
  Tape& tape = tape_of(x);
  Tensor out = map_values(x, [](double v) { return std::log(v); });
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [xv = x.value()](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
    };
  }
  return tape.push("log", std::move(out), {x.id()}, std::move(fn));
}

Var sum(const Var& x) {
  Tape& tape = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (auto& v : gx) v += g[0];
    };
  }
  return tape.push("sum", Tensor::unchecked({}, {s}), {x.id()}, std::move(fn));
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var softmax(const Var& x) {
  Tape& tape = tape_of(x);
  const std::size_t r = x.rows(), c = x.cols();
  const auto in = x.value().data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax: row " + std::to_string(i) + " has no finite entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  Tensor yv = Tensor::unchecked(x.dims(), std::move(out));
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [yv, r, c](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * yv[i * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yv[i * c + j] * (g[i * c + j] - dot);
      }
    };
  }
  return tape.push("softmax", std::move(yv), {x.id()}, std::move(fn));
}

Var log_softmax(const Var& x) {
  Tape& tape = tape_of(x);
  const std::size_t r = x.rows(), c = x.cols();
  const auto in = x.value().data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("log_softmax: row " + std::to_string(i) + " has no finite entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  Tensor yv = Tensor::unchecked(x.dims(), std::move(out));
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [yv, r, c](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < r; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] - std::exp(yv[i * c + j]) * gs;
      }
    };
  }
  return tape.push("log_softmax", std::move(yv), {x.id()}, std::move(fn));
}

Var masked_fill(const Var& x, std::span<const std::uint8_t> mask, double value) {
  Tape& tape = tape_of(x);
  if (mask.size() != x.size()) {
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " for " + to_string(x.dims()));
  }
  const auto in = x.value().data();
  std::vector<double> out(in.begin(), in.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [m = std::vector<std::uint8_t>(mask.begin(), mask.end())](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!m[i]) gx[i] += g[i];
      }
    };
  }
  return tape.push("masked_fill", Tensor::unchecked(x.dims(), std::move(out)), {x.id()}, std::move(fn));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tape& tape = tape_of(x, gamma);
  tape_of(x, beta);
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("layer_norm: affine params must have " + std::to_string(c) + " entries");
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const auto in = x.value().data(), gv = gamma.value().data(), bv = beta.value().data();
  std::vector<double> xhat(in.size()), out(in.size()), rstd(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * rstd[i];
      out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
    }
  }
  BackwardFn fn;
  if (tape.any_requires_grad({x, gamma, beta})) {
    fn = [xhat = std::move(xhat), rstd = std::move(rstd), gval = gamma.value(), r, c](
             std::span<const double> g, GradSink& sink) {
      if (auto gg = sink.grad(1); !gg.empty()) {
        for (std::size_t i = 0; i < r * c; ++i) gg[i % c] += g[i] * xhat[i];
      }
      if (auto gb = sink.grad(2); !gb.empty()) {
        for (std::size_t i = 0; i < r * c; ++i) gb[i % c] += g[i];
      }
      if (auto gx = sink.grad(0); !gx.empty()) {
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = g[i * c + j] * gval[j];
            m1 += dxh;
            m2 += dxh * xhat[i * c + j];
          }
          m1 *= inv_c;
          m2 *= inv_c;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = g[i * c + j] * gval[j];
            gx[i * c + j] += rstd[i] * (dxh - m1 - xhat[i * c + j] * m2);
          }
        }
      }
    };
  }
  return tape.push("layer_norm", Tensor::unchecked(x.dims(), std::move(out)), {x.id(), gamma.id(), beta.id()},
                   std::move(fn));
}

Var gather(const Var& x, Dims out_dims, std::vector<std::size_t> index) {
  Tape& tape = tape_of(x);
  if (element_count(out_dims) != index.size()) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for dims " + to_string(out_dims));
  }
  const auto in = x.value().data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= in.size()) throw ShapeError("gather: index out of range");
    out[i] = in[index[i]];
  }
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [index = std::move(index)](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[index[i]] += g[i];
    };
  }
  return tape.push("gather", Tensor::unchecked(std::move(out_dims), std::move(out)), {x.id()}, std::move(fn));
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  Tape& tape = tape_of(x);
  require_rank2(x, "gather_rows");
  const std::size_t n = x.rows(), c = x.cols();
  if (rows.empty()) throw ShapeError("gather_rows: no rows selected");
  const auto in = x.value().data();
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(in.data() + rows[i] * c, c, out.data() + i * c);
  }
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [idx = std::vector<std::size_t>(rows.begin(), rows.end()), c](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
      }
    };
  }
  return tape.push("gather_rows", Tensor::unchecked({rows.size(), c}, std::move(out)), {x.id()}, std::move(fn));
}

Var concat_rows(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, b);
  require_rank2(a, "concat_rows");
  if (b.cols() != a.cols()) {
    throw ShapeError("concat_rows: " + to_string(a.dims()) + " and " + to_string(b.dims()));
  }
  const std::size_t ra = a.rows(), rb = b.rows(), c = a.cols();
  std::vector<double> out;
  out.reserve((ra + rb) * c);
  out.insert(out.end(), a.value().data().begin(), a.value().data().end());
  out.insert(out.end(), b.value().data().begin(), b.value().data().end());
  BackwardFn fn;
  if (tape.any_requires_grad({a, b})) {
    fn = [split = ra * c](std::span<const double> g, GradSink& sink) {
      if (auto ga = sink.grad(0); !ga.empty()) {
        for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
      }
      if (auto gb = sink.grad(1); !gb.empty()) {
        for (std::size_t i = split; i < g.size(); ++i) gb[i - split] += g[i];
      }
    };
  }
  return tape.push("concat_rows", Tensor::unchecked({ra + rb, c}, std::move(out)), {a.id(), b.id()},
                   std::move(fn));
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(x);
  require_rank2(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > c) throw ShapeError("slice_cols: range out of bounds");
  const auto in = x.value().data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(in.data() + i * c + begin, count, out.data() + i * count);
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [r, c, begin, count](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < count; ++j) gx[i * c + begin + j] += g[i * count + j];
      }
    };
  }
  return tape.push("slice_cols", Tensor::unchecked({r, count}, std::move(out)), {x.id()}, std::move(fn));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  Tape& tape = tape_of(parts[0]);
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths, inputs;
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    require_rank2(p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    inputs.push_back(p.id());
    total += p.cols();
    rg = rg || tape.any_requires_grad({p});
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto in = p.value().data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(in.data() + i * w, w, out.data() + i * total + off);
    off += w;
  }
  BackwardFn fn;
  if (rg) {
    fn = [widths, r, total](std::span<const double> g, GradSink& sink) {
      std::size_t off = 0;
      for (std::size_t s = 0; s < widths.size(); ++s) {
        const std::size_t w = widths[s];
        if (auto gp = sink.grad(s); !gp.empty()) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
          }
        }
        off += w;
      }
    };
  }
  return tape.push("concat_cols", Tensor::unchecked({r, total}, std::move(out)), std::move(inputs), std::move(fn));
}

Var reshape(const Var& x, Dims dims) {
  Tape& tape = tape_of(x);
  Tensor out = x.value().reshaped(std::move(dims));
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return tape.push("reshape", std::move(out), {x.id()}, std::move(fn));
}

Var dropout(const Var& x, double rate, std::uint64_t seed, bool train) {
  if (!train || rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be below 1");
  Tape& tape = tape_of(x);
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  const auto in = x.value().data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  BackwardFn fn;
  if (tape.any_requires_grad({x})) {
    fn = [mask = std::move(mask)](std::span<const double> g, GradSink& sink) {
      auto gx = sink.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  }
  return tape.push("dropout", Tensor::unchecked(x.dims(), std::move(out)), {x.id()}, std::move(fn));
}

}  // namespace bertplm::ad
