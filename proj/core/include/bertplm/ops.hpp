#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bertplm/tape.hpp"

// Differentiable primitives. Every op treats its operands as matrices of
// rows() x cols() (see Tensor), works along the trailing axis, and records a
// node on the operands' tape. Operands must share a tape.
namespace bertplm::ad {

/// [m x k] * [k x n] -> [m x n]
Var matmul(const Var& a, const Var& b);
/// a * b^T: [m x k] * [n x k]^T -> [m x n]
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a length-cols vector to every row of `a`.
Var add_row(const Var& a, const Var& row);

/// tanh-approximated GELU.
Var gelu(const Var& x);
Var log(const Var& x);
/// Sum of all entries, rank-0 result.
Var sum(const Var& x);
Var mean(const Var& x);

/// Row-wise softmax with max subtraction. -inf entries get probability 0; a
/// row that is entirely -inf is a ContractError.
Var softmax(const Var& x);
Var log_softmax(const Var& x);
/// Entries whose mask byte is nonzero are replaced by `value`; no gradient
/// flows through them.
Var masked_fill(const Var& x, std::span<const std::uint8_t> mask, double value);

/// Row-wise normalization followed by the affine gamma * xhat + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// out.flat[i] = x.flat[index[i]]; result has `out_dims`.
Var gather(const Var& x, Dims out_dims, std::vector<std::size_t> index);
/// Selects rows of a rank-2 operand (repeats allowed).
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
/// Alias of gather_rows for id -> vector lookups.
inline Var embedding_lookup(const Var& table, std::span<const std::size_t> ids) {
  return gather_rows(table, ids);
}
/// Stacks the rows of `b` under `a`. A rank-1 `b` counts as one row.
Var concat_rows(const Var& a, const Var& b);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var reshape(const Var& x, Dims dims);

/// Inverted dropout. Identity unless `train` and rate > 0; the keep mask is a
/// pure function of `seed`.
Var dropout(const Var& x, double rate, std::uint64_t seed, bool train);

}  // namespace bertplm::ad
