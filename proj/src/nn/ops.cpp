#include "mgcat/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgcat/common.hpp"
#include "mgcat/kernels.hpp"

namespace mgcat::nn {

namespace {

using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Shape mat(std::size_t r, std::size_t c) { return {r, c}; }

// New result node; records parents only when some parent needs a gradient.
NodePtr make(Shape shape, std::initializer_list<const Tensor*> parents, const char* op) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->op = op;
  n->leaf = false;
  if (grad_enabled()) {
    for (const Tensor* p : parents)
      if (p->requires_grad()) n->requires_grad = true;
    if (n->requires_grad)
      for (const Tensor* p : parents) n->parents.push_back(p->ptr());
  }
  return n;
}

NodePtr make_many(Shape shape, const std::vector<Tensor>& parents, const char* op) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->op = op;
  n->leaf = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad)
      for (const auto& p : parents) n->parents.push_back(p.ptr());
  }
  return n;
}

// Gradient buffer of a parent if it participates, else nullptr.
double* gbuf(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

void check_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  auto n = make(a.shape(), {&a}, name);
  const auto av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) n->value[i] = fwd(av[i]);
  if (n->requires_grad) {
    n->backward = [deriv](Node& self) {
      double* ga = gbuf(self.parents[0]);
      const auto& x = self.parents[0]->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows() || b.rank() > 2) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make(mat(m, n), {&a, &b}, "matmul");
  kernels::gemm(Exec::parallel, {m, n, k, false, false}, a.data().data(), b.data().data(), out->value.data(), false);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      const auto& A = self.parents[0];
      const auto& B = self.parents[1];
      if (double* ga = gbuf(A))  // dA = dC B^T
        kernels::gemm(Exec::parallel, {m, k, n, false, true}, self.grad.data(), B->value.data(), ga, true);
      if (double* gb = gbuf(B))  // dB = A^T dC
        kernels::gemm(Exec::parallel, {k, n, m, true, false}, A->value.data(), self.grad.data(), gb, true);
    };
  }
  return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  auto out = make(mat(m, n), {&a, &b}, "matmul_nt");
  kernels::gemm(Exec::parallel, {m, n, k, false, true}, a.data().data(), b.data().data(), out->value.data(), false);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      const auto& A = self.parents[0];
      const auto& B = self.parents[1];
      if (double* ga = gbuf(A))  // dA = dC B
        kernels::gemm(Exec::parallel, {m, k, n, false, false}, self.grad.data(), B->value.data(), ga, true);
      if (double* gb = gbuf(B))  // dB = dC^T A
        kernels::gemm(Exec::parallel, {n, k, m, true, false}, self.grad.data(), A->value.data(), gb, true);
    };
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make(mat(c, r), {&a}, "transpose");
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j * r + i] = av[i * c + j];
  if (out->requires_grad) {
    out->backward = [r, c](Node& self) {
      double* ga = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    };
  }
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same("add", a, b);
  auto out = make(a.shape(), {&a, &b}, "add");
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      for (int p = 0; p < 2; ++p)
        if (double* g = gbuf(self.parents[static_cast<std::size_t>(p)]))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same("sub", a, b);
  auto out = make(a.shape(), {&a, &b}, "sub");
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      if (double* g = gbuf(self.parents[0]))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      if (double* g = gbuf(self.parents[1]))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same("mul", a, b);
  auto out = make(a.shape(), {&a, &b}, "mul");
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      const auto& A = self.parents[0]->value;
      const auto& B = self.parents[1]->value;
      if (double* g = gbuf(self.parents[0]))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * B[i];
      if (double* g = gbuf(self.parents[1]))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * A[i];
    };
  }
  return Tensor(out);
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols()) shape_error("add_bias", a, bias);
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make(a.shape(), {&a, &bias}, "add_bias");
  const auto av = a.data(), bv = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = av[i * c + j] + bv[j];
  if (out->requires_grad) {
    out->backward = [r, c](Node& self) {
      if (double* g = gbuf(self.parents[0]))
        for (std::size_t i = 0; i < r * c; ++i) g[i] += self.grad[i];
      if (double* g = gbuf(self.parents[1]))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    };
  }
  return Tensor(out);
}

Tensor mul_col(const Tensor& a, const Tensor& s) {
  if (s.size() != a.rows()) shape_error("mul_col", a, s);
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make(a.shape(), {&a, &s}, "mul_col");
  const auto av = a.data(), sv = s.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = av[i * c + j] * sv[i];
  if (out->requires_grad) {
    out->backward = [r, c](Node& self) {
      const auto& A = self.parents[0]->value;
      const auto& S = self.parents[1]->value;
      if (double* g = gbuf(self.parents[0]))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * S[i];
      if (double* g = gbuf(self.parents[1]))
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * A[i * c + j];
          g[i] += acc;
        }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make(a.shape(), {&a}, "softmax_rows");
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out->value.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  if (out->requires_grad) {
    out->backward = [r, c](Node& self) {
      double* ga = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = self.value.data() + i * c;
        const double* gy = self.grad.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r)
    throw ValidationError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                          shape_str(logits.shape()));
  std::vector<double> probs(r * c, 0.0);
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  const auto lv = logits.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (tgt[i] < 0) continue;
    if (static_cast<std::size_t>(tgt[i]) >= c) throw ValidationError("cross_entropy: target out of range");
    const double* x = lv.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(x[j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += -(x[static_cast<std::size_t>(tgt[i])] - mx - std::log(z));
    ++count;
  }
  if (count == 0) throw ValidationError("cross_entropy: no target rows");
  auto out = make({}, {&logits}, "cross_entropy");
  out->value[0] = total / static_cast<double>(count);
  if (out->requires_grad) {
    out->backward = [r, c, count, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
      double* g = gbuf(self.parents[0]);
      const double s = self.grad[0] / static_cast<double>(count);
      for (std::size_t i = 0; i < r; ++i) {
        if (tgt[i] < 0) continue;
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += s * probs[i * c + j];
        g[i * c + static_cast<std::size_t>(tgt[i])] -= s;
      }
    };
  }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c) shape_error("layer_norm gain", x, gain);
  if (bias.size() != c) shape_error("layer_norm bias", x, bias);
  auto out = make(x.shape(), {&x, &gain, &bias}, "layer_norm");
  std::vector<double> xhat(r * c);
  std::vector<double> inv_std(r);
  const auto xv = x.data(), gv = gain.data(), bv = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out->value[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  if (out->requires_grad) {
    out->backward = [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
      const auto& G = self.parents[1]->value;
      double* gx = gbuf(self.parents[0]);
      double* gg = gbuf(self.parents[1]);
      double* gb = gbuf(self.parents[2]);
      std::vector<double> dxhat(c);
      for (std::size_t i = 0; i < r; ++i) {
        const double* dy = self.grad.data() + i * c;
        const double* xh = xhat.data() + i * c;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          if (gg) gg[j] += dy[j] * xh[j];
          if (gb) gb[j] += dy[j];
          dxhat[j] = dy[j] * G[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * xh[j];
        }
        if (!gx) continue;
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += inv_std[i] * (dxhat[j] - m1 - xh[j] * m2);
      }
    };
  }
  return Tensor(out);
}

Tensor embedding(const Tensor& table, std::span<const int> ids, int padding_idx) {
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw ValidationError("embedding: id " + std::to_string(id) + " outside vocab of " + std::to_string(v));
  auto out = make(mat(idx.size(), d), {&table}, "embedding");
  const auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] == padding_idx) continue;
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out->value.data() + i * d);
  }
  if (out->requires_grad) {
    out->backward = [d, padding_idx, idx = std::move(idx)](Node& self) {
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] == padding_idx) continue;
        double* row = g + static_cast<std::size_t>(idx[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
      }
    };
  }
  return Tensor(out);
}

Tensor gather_rows(const Tensor& a, std::span<const int> ids) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  for (int i : idx)
    if (i < 0 || static_cast<std::size_t>(i) >= r) throw ValidationError("gather_rows: index out of range");
  auto out = make(mat(idx.size(), c), {&a}, "gather_rows");
  const auto av = a.data();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(av.data() + static_cast<std::size_t>(idx[i]) * c, c, out->value.data() + i * c);
  if (out->requires_grad) {
    out->backward = [c, idx = std::move(idx)](Node& self) {
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* row = g + static_cast<std::size_t>(idx[i]) * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += self.grad[i * c + j];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) shape_error("concat_cols", parts[0], p);
    widths.push_back(p.cols());
    total += p.cols();
  }
  auto out = make_many(mat(r, total), parts, "concat_cols");
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto pv = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(pv.data() + i * w, w, out->value.data() + i * total + off);
    off += w;
  }
  if (out->requires_grad) {
    out->backward = [r, total, widths = std::move(widths)](Node& self) {
      std::size_t o = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t w = widths[k];
        if (double* g = gbuf(self.parents[k]))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + o + j];
        o += w;
      }
    };
  }
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.cols() != c) shape_error("concat_rows", parts[0], p);
    total += p.rows();
    sizes.push_back(p.size());
  }
  auto out = make_many(mat(total, c), parts, "concat_rows");
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out->value.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  if (out->requires_grad) {
    out->backward = [sizes = std::move(sizes)](Node& self) {
      std::size_t o = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (double* g = gbuf(self.parents[k]))
          for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[o + i];
        o += sizes[k];
      }
    };
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  if (begin > end || end > c) throw ValidationError("slice_cols: range out of bounds for " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  auto out = make(mat(r, w), {&a}, "slice_cols");
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + begin, w, out->value.data() + i * w);
  if (out->requires_grad) {
    out->backward = [r, c, w, begin](Node& self) {
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
    };
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  if (begin > end || end > r) throw ValidationError("slice_rows: range out of bounds for " + shape_str(a.shape()));
  auto out = make(mat(end - begin, c), {&a}, "slice_rows");
  std::copy(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
            a.data().begin() + static_cast<std::ptrdiff_t>(end * c), out->value.begin());
  if (out->requires_grad) {
    out->backward = [c, begin](Node& self) {
      double* g = gbuf(self.parents[0]) + begin * c;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ValidationError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto out = make(std::move(shape), {&a}, "reshape");
  std::copy(a.data().begin(), a.data().end(), out->value.begin());
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ValidationError("mean_rows: empty input");
  auto out = make(mat(1, c), {&a}, "mean_rows");
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j] += av[i * c + j];
  for (auto& v : out->value) v /= static_cast<double>(r);
  if (out->requires_grad) {
    out->backward = [r, c](Node& self) {
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] / static_cast<double>(r);
    };
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make({}, {&a}, "sum");
  for (double v : a.data()) out->value[0] += v;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      const auto& p = self.parents[0];
      double* g = gbuf(p);
      for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ValidationError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor temporal_encoding(const Tensor& w, std::span<const double> times) {
  const std::size_t half = w.size();
  const std::size_t d = 2 * half;
  const double norm = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> t(times.begin(), times.end());
  auto out = make(mat(t.size(), d), {&w}, "temporal_encoding");
  const auto wv = w.data();
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t k = 0; k < half; ++k) {
      out->value[i * d + 2 * k] = std::cos(wv[k] * t[i]) * norm;
      out->value[i * d + 2 * k + 1] = std::sin(wv[k] * t[i]) * norm;
    }
  if (out->requires_grad) {
    out->backward = [half, d, norm, t = std::move(t)](Node& self) {
      const auto& W = self.parents[0]->value;
      double* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t k = 0; k < half; ++k) {
          const double a = W[k] * t[i];
          g[k] += norm * t[i] * (-std::sin(a) * self.grad[i * d + 2 * k] + std::cos(a) * self.grad[i * d + 2 * k + 1]);
        }
    };
  }
  return Tensor(out);
}

Tensor bucket_bias(const Tensor& delta, std::span<const int> buckets, std::size_t rows, std::size_t cols) {
  const std::size_t nb = delta.size();
  if (buckets.size() != rows * cols) throw ValidationError("bucket_bias: bucket map size mismatch");
  const auto dv = delta.data();
  std::vector<double> cum(nb);
  double acc = 0.0;
  for (std::size_t q = 0; q < nb; ++q) {
    // softplus, stable for large |x|
    const double x = dv[q];
    acc += x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    cum[q] = acc;
  }
  std::vector<int> bk(buckets.begin(), buckets.end());
  auto out = make(mat(rows, cols), {&delta}, "bucket_bias");
  for (std::size_t i = 0; i < bk.size(); ++i) {
    if (bk[i] < 0) continue;
    if (static_cast<std::size_t>(bk[i]) >= nb) throw ValidationError("bucket_bias: bucket index out of range");
    out->value[i] = cum[static_cast<std::size_t>(bk[i])];
  }
  if (out->requires_grad) {
    out->backward = [nb, bk = std::move(bk)](Node& self) {
      const auto& D = self.parents[0]->value;
      double* g = gbuf(self.parents[0]);
      std::vector<double> per_bucket(nb, 0.0);
      for (std::size_t i = 0; i < bk.size(); ++i)
        if (bk[i] >= 0) per_bucket[static_cast<std::size_t>(bk[i])] += self.grad[i];
      // d out[b] / d delta[q] = sigmoid(delta[q]) for every q <= b.
      double suffix = 0.0;
      for (std::size_t q = nb; q-- > 0;) {
        suffix += per_bucket[q];
        g[q] += suffix / (1.0 + std::exp(-D[q]));
      }
    };
  }
  return Tensor(out);
}

Tensor graph_attention(const Tensor& h, const Tensor& a_src, const Tensor& a_dst,
                       const std::vector<std::vector<int>>& neighborhoods, std::size_t heads, double slope) {
  const std::size_t n = h.rows(), d = h.cols();
  if (heads == 0 || d % heads != 0) throw ValidationError("graph_attention: width not divisible by heads");
  const std::size_t dh = d / heads;
  if (a_src.size() != d || a_dst.size() != d) shape_error("graph_attention", h, a_src);
  for (const auto& nb : neighborhoods) {
    if (nb.empty()) throw ValidationError("graph_attention: neighborhood must contain the node itself");
    for (int j : nb)
      if (j < 0 || static_cast<std::size_t>(j) >= n) throw ValidationError("graph_attention: row out of range");
  }
  const std::size_t t_count = neighborhoods.size();
  auto out = make(mat(t_count, d), {&h, &a_src, &a_dst}, "graph_attention");
  const auto H = h.data(), As = a_src.data(), Ad = a_dst.data();

  // Per (target, head): attention weights and pre-activation scores, flattened.
  std::vector<std::size_t> offset(t_count + 1, 0);
  for (std::size_t t = 0; t < t_count; ++t) offset[t + 1] = offset[t] + neighborhoods[t].size() * heads;
  std::vector<double> alpha(offset.back());
  std::vector<double> pre(offset.back());

  for (std::size_t t = 0; t < t_count; ++t) {
    const auto& nb = neighborhoods[t];
    const std::size_t self_row = static_cast<std::size_t>(nb[0]);
    for (std::size_t k = 0; k < heads; ++k) {
      const std::size_t c0 = k * dh;
      double src = 0.0;
      for (std::size_t c = 0; c < dh; ++c) src += As[c0 + c] * H[self_row * d + c0 + c];
      double* al = alpha.data() + offset[t] + k * nb.size();
      double* pr = pre.data() + offset[t] + k * nb.size();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < nb.size(); ++q) {
        const std::size_t j = static_cast<std::size_t>(nb[q]);
        double e = src;
        for (std::size_t c = 0; c < dh; ++c) e += Ad[c0 + c] * H[j * d + c0 + c];
        pr[q] = e;
        al[q] = e > 0.0 ? e : slope * e;
        mx = std::max(mx, al[q]);
      }
      double z = 0.0;
      for (std::size_t q = 0; q < nb.size(); ++q) {
        al[q] = std::exp(al[q] - mx);
        z += al[q];
      }
      for (std::size_t q = 0; q < nb.size(); ++q) al[q] /= z;
      double* o = out->value.data() + t * d + c0;
      for (std::size_t q = 0; q < nb.size(); ++q) {
        const std::size_t j = static_cast<std::size_t>(nb[q]);
        for (std::size_t c = 0; c < dh; ++c) o[c] += al[q] * H[j * d + c0 + c];
      }
    }
  }

  if (out->requires_grad) {
    out->backward = [d, dh, heads, slope, neighborhoods, offset = std::move(offset), alpha = std::move(alpha),
                     pre = std::move(pre)](Node& self) {
      const auto& Hn = self.parents[0]->value;
      const auto& AS = self.parents[1]->value;
      const auto& AD = self.parents[2]->value;
      double* gh = gbuf(self.parents[0]);
      double* gs = gbuf(self.parents[1]);
      double* gd = gbuf(self.parents[2]);
      std::vector<double> dalpha;
      for (std::size_t t = 0; t < neighborhoods.size(); ++t) {
        const auto& nb = neighborhoods[t];
        const std::size_t self_row = static_cast<std::size_t>(nb[0]);
        dalpha.assign(nb.size(), 0.0);
        for (std::size_t k = 0; k < heads; ++k) {
          const std::size_t c0 = k * dh;
          const double* al = alpha.data() + offset[t] + k * nb.size();
          const double* pr = pre.data() + offset[t] + k * nb.size();
          const double* go = self.grad.data() + t * d + c0;
          double dot = 0.0;
          for (std::size_t q = 0; q < nb.size(); ++q) {
            const std::size_t j = static_cast<std::size_t>(nb[q]);
            double da = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
              da += go[c] * Hn[j * d + c0 + c];
              if (gh) gh[j * d + c0 + c] += al[q] * go[c];
            }
            dalpha[q] = da;
            dot += al[q] * da;
          }
          for (std::size_t q = 0; q < nb.size(); ++q) {
            const std::size_t j = static_cast<std::size_t>(nb[q]);
            const double de = al[q] * (dalpha[q] - dot) * (pr[q] > 0.0 ? 1.0 : slope);
            for (std::size_t c = 0; c < dh; ++c) {
              if (gs) gs[c0 + c] += de * Hn[self_row * d + c0 + c];
              if (gd) gd[c0 + c] += de * Hn[j * d + c0 + c];
              if (gh) {
                gh[self_row * d + c0 + c] += de * AS[c0 + c];
                gh[j * d + c0 + c] += de * AD[c0 + c];
              }
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace mgcat::nn
