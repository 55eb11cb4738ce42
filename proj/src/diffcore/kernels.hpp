#pragma once

#include <cstddef>

#include "mind/diffcore/graph.hpp"
#include "mind/diffcore/tensor.hpp"

// Dense kernels behind the graph primitives. Backward kernels accumulate into
// their gradient outputs.
namespace mind::kernels {

Shape broadcast_shape(const Shape& a, const Shape& b);

enum class Binary { add, sub, mul };

void broadcast_forward(Binary op, const Tensor& a, const Tensor& b, Tensor& out);
void broadcast_backward(Binary op, const Tensor& a, const Tensor& b, const Tensor& grad_out,
                        Tensor* grad_a, Tensor* grad_b);

// C(n x m) += A(n x k) * B(k x m), with optional transposes of the stored
// operands (A stored k x n when transpose_a, B stored m x k when transpose_b).
void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
          std::size_t m, bool transpose_a, bool transpose_b);

void conv1d_forward(const Tensor& x, const Tensor& w, const Conv1dOptions& options,
                    Tensor& out);
void conv1d_backward(const Tensor& x, const Tensor& w, const Conv1dOptions& options,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w);

void batch_norm_forward(const Tensor& x, double epsilon, Tensor& out);
void batch_norm_backward(const Tensor& x, double epsilon, const Tensor& grad_out,
                         Tensor& grad_x);

}  // namespace mind::kernels
