#pragma once

#include <span>
#include <vector>

#include "mgcat/nn/tensor.hpp"

namespace mgcat::nn {

// All ops treat tensors as (rows x cols) matrices: rows() x cols(). Shapes
// must match exactly except for the explicit bias/column broadcasts below.
// Mismatches throw ValidationError naming both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[n,c] + bias[1,c] on every row
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// a[n,c] * s[n,1] per row
Tensor mul_col(const Tensor& a, const Tensor& s);
Tensor scale(const Tensor& a, double s);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
/// Mean of -log softmax(logits[r])[targets[r]] over rows with target >= 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-9);

/// Row gather from table[V, d]. Rows for padding_idx are zero and receive no
/// gradient.
Tensor embedding(const Tensor& table, std::span<const int> ids, int padding_idx = -1);
Tensor gather_rows(const Tensor& a, std::span<const int> idx);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

Tensor mean_rows(const Tensor& a);  // [n,c] -> [1,c]
Tensor sum(const Tensor& a);        // scalar
Tensor mean(const Tensor& a);       // scalar

/// Interleaved [cos(w_k t), sin(w_k t)] / sqrt(2 * w.size()) for each t.
Tensor temporal_encoding(const Tensor& w, std::span<const double> times);

/// out[i,j] = sum_{q <= bucket[i,j]} softplus(delta[q]); 0 where bucket < 0.
/// `buckets` is row-major [rows, cols].
Tensor bucket_bias(const Tensor& delta, std::span<const int> buckets, std::size_t rows, std::size_t cols);

/// Single-layer multi-head graph attention over rows of h[n, d]. For target t,
/// neighborhoods[t] lists row indices of h; its first entry is the node itself.
/// Head k uses columns [k*d/heads, (k+1)*d/heads) and vectors a_src[k], a_dst[k].
/// Output row t concatenates the heads' attention-weighted sums.
Tensor graph_attention(const Tensor& h, const Tensor& a_src, const Tensor& a_dst,
                       const std::vector<std::vector<int>>& neighborhoods, std::size_t heads, double slope);

}  // namespace mgcat::nn
