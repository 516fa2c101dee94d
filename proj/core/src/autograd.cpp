#include "tsfm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsfm/errors.hpp"

namespace tsfm {

namespace detail {

void mm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int64_t t = 0; t < k; ++t) {
      const double av = a[t];
      const double* b = B + t * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

void mm_abt_acc(const double* A, const double* B, double* C, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * n;
    double* c = C + i * k;
    for (int64_t t = 0; t < k; ++t) {
      const double* b = B + t * n;
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += a[j] * b[j];
      c[t] += s;
    }
  }
}

void mm_atb_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    const double* b = B + i * n;
    for (int64_t t = 0; t < k; ++t) {
      const double av = a[t];
      double* c = C + t * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

namespace {

constexpr double kMaskFill = -1e30;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return cdf + x * pdf;
}

double softplus_fwd(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(const char* op, std::initializer_list<Var> inputs, Tensor value,
               std::function<void(Tape&, int32_t)> bw) {
  if (!value.all_finite())
    raise(errc::non_finite_value, std::string("op '") + op + "' produced NaN/Inf");
  Node n;
  n.op = op;
  for (Var v : inputs) {
    n.in[static_cast<size_t>(n.n_in++)] = v.id;
    if (nodes_[static_cast<size_t>(v.id)].requires_grad) n.requires_grad = true;
  }
  n.value = std::move(value);
  n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor v, bool requires_grad) {
  if (!v.all_finite()) raise(errc::non_finite_value, "leaf tensor contains NaN/Inf");
  Node n;
  n.op = "leaf";
  n.requires_grad = requires_grad;
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(int32_t id) {
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    has_grad_.resize(nodes_.size(), 0);
  }
  auto i = static_cast<size_t>(id);
  if (!has_grad_[i]) {
    grads_[i] = Tensor::zeros(nodes_[i].value.shape());
    has_grad_[i] = 1;
  }
  return grads_[i];
}

void Tape::accumulate(int32_t id, const Tensor& g) {
  Tensor& buf = grad_buf(id);
  double* d = buf.data();
  const double* s = g.data();
  const int64_t n = buf.size();
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

const Tensor& Tape::grad(Var v) { return grad_buf(v.id); }

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) raise(errc::shape_mismatch, "add " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return push("add", {a, b}, std::move(out), [](Tape& t, int32_t self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) t.accumulate(nd.in[0], g);
    if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) t.accumulate(nd.in[1], g);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) raise(errc::shape_mismatch, "sub " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  return push("sub", {a, b}, std::move(out), [](Tape& t, int32_t self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) t.accumulate(nd.in[0], g);
    if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
      Tensor& gb = t.grad_buf(nd.in[1]);
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) raise(errc::shape_mismatch, "mul " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  return push("mul", {a, b}, std::move(out), [](Tape& t, int32_t self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& va = t.nodes_[static_cast<size_t>(nd.in[0])].value;
    const Tensor& vb = t.nodes_[static_cast<size_t>(nd.in[1])].value;
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) {
      Tensor& ga = t.grad_buf(nd.in[0]);
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
      Tensor& gb = t.grad_buf(nd.in[1]);
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  return push("scale", {a}, std::move(out), [s](Tape& t, int32_t self) {
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
  return push("add_scalar", {a}, std::move(out), [](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad)
      t.accumulate(nd.in[0], t.grads_[static_cast<size_t>(self)]);
  });
}

Var Tape::gelu(Var a) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = gelu_fwd(out[i]);
  return push("gelu", {a}, std::move(out), [](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& x = t.nodes_[static_cast<size_t>(nd.in[0])].value;
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * gelu_grad(x[i]);
  });
}

Var Tape::softplus(Var a) {
  Tensor out = value(a);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = softplus_fwd(out[i]);
  return push("softplus", {a}, std::move(out), [](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& x = t.nodes_[static_cast<size_t>(nd.in[0])].value;
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * sigmoid(x[i]);
  });
}

Var Tape::transpose(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2) raise(errc::shape_mismatch, "transpose expects rank-2, got " + ta.shape_str());
  const int64_t m = ta.dim(0), n = ta.dim(1);
  Tensor out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  return push("transpose", {a}, std::move(out), [m, n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  const Tensor& ta = value(a);
  if (shape_product(shape) != ta.size())
    raise(errc::shape_mismatch, "reshape " + ta.shape_str() + " to incompatible size");
  Tensor out(std::move(shape), ta.flat());
  return push("reshape", {a}, std::move(out), [](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::slice_rows(Var a, int64_t r0, int64_t r1) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || r0 < 0 || r1 > ta.dim(0) || r0 >= r1)
    raise(errc::shape_mismatch, "slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") of " + ta.shape_str());
  const int64_t n = ta.dim(1);
  Tensor out({r1 - r0, n});
  std::copy(ta.data() + r0 * n, ta.data() + r1 * n, out.data());
  return push("slice_rows", {a}, std::move(out), [r0, n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    double* dst = ga.data() + r0 * n;
    for (int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || c0 < 0 || c1 > ta.dim(1) || c0 >= c1)
    raise(errc::shape_mismatch, "slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") of " + ta.shape_str());
  const int64_t m = ta.dim(0), n = ta.dim(1), w = c1 - c0;
  Tensor out({m, w});
  for (int64_t i = 0; i < m; ++i)
    std::copy(ta.data() + i * n + c0, ta.data() + i * n + c1, out.data() + i * w);
  return push("slice_cols", {a}, std::move(out), [c0, n, w](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    const int64_t m = g.dim(0);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) ga.data()[i * n + c0 + j] += g.data()[i * w + j];
  });
}

// Variadic concats fold into pairwise nodes to keep input arity fixed.
Var Tape::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) raise(errc::shape_mismatch, "concat_rows of nothing");
  Var r = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) {
    const Tensor& ta = value(r);
    const Tensor& tb = value(xs[i]);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(1))
      raise(errc::shape_mismatch, "concat_rows column mismatch");
    const int64_t ra = ta.dim(0), rb = tb.dim(0), n = ta.dim(1);
    Tensor o({ra + rb, n});
    std::copy(ta.data(), ta.data() + ta.size(), o.data());
    std::copy(tb.data(), tb.data() + tb.size(), o.data() + ta.size());
    r = push("concat_rows", {r, xs[i]}, std::move(o), [ra, rb, n](Tape& t, int32_t self) {
      auto& nd = t.nodes_[static_cast<size_t>(self)];
      const Tensor& g = t.grads_[static_cast<size_t>(self)];
      if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) {
        Tensor& ga = t.grad_buf(nd.in[0]);
        for (int64_t i = 0; i < ra * n; ++i) ga[i] += g[i];
      }
      if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
        Tensor& gb = t.grad_buf(nd.in[1]);
        for (int64_t i = 0; i < rb * n; ++i) gb[i] += g[ra * n + i];
      }
    });
  }
  return r;
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) raise(errc::shape_mismatch, "concat_cols of nothing");
  Var r = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) {
    const Tensor& ta = value(r);
    const Tensor& tb = value(xs[i]);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
      raise(errc::shape_mismatch, "concat_cols row mismatch");
    const int64_t m = ta.dim(0), na = ta.dim(1), nb = tb.dim(1);
    Tensor o({m, na + nb});
    for (int64_t row = 0; row < m; ++row) {
      std::copy(ta.data() + row * na, ta.data() + (row + 1) * na, o.data() + row * (na + nb));
      std::copy(tb.data() + row * nb, tb.data() + (row + 1) * nb, o.data() + row * (na + nb) + na);
    }
    r = push("concat_cols", {r, xs[i]}, std::move(o), [m, na, nb](Tape& t, int32_t self) {
      auto& nd = t.nodes_[static_cast<size_t>(self)];
      const Tensor& g = t.grads_[static_cast<size_t>(self)];
      if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) {
        Tensor& ga = t.grad_buf(nd.in[0]);
        for (int64_t row = 0; row < m; ++row)
          for (int64_t j = 0; j < na; ++j) ga.data()[row * na + j] += g.data()[row * (na + nb) + j];
      }
      if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
        Tensor& gb = t.grad_buf(nd.in[1]);
        for (int64_t row = 0; row < m; ++row)
          for (int64_t j = 0; j < nb; ++j)
            gb.data()[row * nb + j] += g.data()[row * (na + nb) + na + j];
      }
    });
  }
  return r;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    raise(errc::shape_mismatch, "matmul " + ta.shape_str() + " x " + tb.shape_str());
  const int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  detail::mm_acc(ta.data(), tb.data(), out.data(), m, k, n);
  return push("matmul", {a, b}, std::move(out), [m, k, n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& va = t.nodes_[static_cast<size_t>(nd.in[0])].value;
    const Tensor& vb = t.nodes_[static_cast<size_t>(nd.in[1])].value;
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad)
      detail::mm_abt_acc(g.data(), vb.data(), t.grad_buf(nd.in[0]).data(), m, n, k);
    if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad)
      detail::mm_atb_acc(va.data(), g.data(), t.grad_buf(nd.in[1]).data(), m, k, n);
  });
}

Var Tape::add_row_broadcast(Var a, Var row) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(row);
  if (ta.rank() != 2 || tr.rank() != 1 || ta.dim(1) != tr.dim(0))
    raise(errc::shape_mismatch, "add_row_broadcast " + ta.shape_str() + " + " + tr.shape_str());
  const int64_t m = ta.dim(0), n = ta.dim(1);
  Tensor out = ta;
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i, j) += tr[j];
  return push("add_row_broadcast", {a, row}, std::move(out), [m, n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) t.accumulate(nd.in[0], g);
    if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
      Tensor& gr = t.grad_buf(nd.in[1]);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gr[j] += g.data()[i * n + j];
    }
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  return push("sum_all", {a}, Tensor::scalar(s), [](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const double g0 = t.grads_[static_cast<size_t>(self)][0];
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g0;
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& ta = value(a);
  if (ta.size() == 0) raise(errc::shape_mismatch, "mean_all of empty tensor");
  double s = 0.0;
  for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  const double inv = 1.0 / static_cast<double>(ta.size());
  return push("mean_all", {a}, Tensor::scalar(s * inv), [inv](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const double g0 = t.grads_[static_cast<size_t>(self)][0] * inv;
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g0;
  });
}

Var Tape::mean_rows(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2) raise(errc::shape_mismatch, "mean_rows expects rank-2, got " + ta.shape_str());
  const int64_t m = ta.dim(0), n = ta.dim(1);
  Tensor out({n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j] += ta.at(i, j);
  const double inv = 1.0 / static_cast<double>(m);
  for (int64_t j = 0; j < n; ++j) out[j] *= inv;
  return push("mean_rows", {a}, std::move(out), [m, n, inv](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga.data()[i * n + j] += g[j] * inv;
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 1 && ta.rank() != 2)
    raise(errc::shape_mismatch, "softmax_rows expects rank-1/2, got " + ta.shape_str());
  const int64_t m = ta.rank() == 2 ? ta.dim(0) : 1;
  const int64_t n = ta.rank() == 2 ? ta.dim(1) : ta.dim(0);
  Tensor out = ta;
  for (int64_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const double inv = 1.0 / z;
    for (int64_t j = 0; j < n; ++j) row[j] *= inv;
  }
  return push("softmax_rows", {a}, std::move(out), [m, n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < m; ++i) {
      const double* gr = g.data() + i * n;
      const double* yr = y.data() + i * n;
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      double* dst = ga.data() + i * n;
      for (int64_t j = 0; j < n; ++j) dst[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  const int64_t m = tx.rank() == 2 ? tx.dim(0) : 1;
  const int64_t n = tx.rank() == 2 ? tx.dim(1) : tx.dim(0);
  if ((tx.rank() != 1 && tx.rank() != 2) || tg.rank() != 1 || tb.rank() != 1 || tg.dim(0) != n ||
      tb.dim(0) != n)
    raise(errc::shape_mismatch, "layer_norm_rows x " + tx.shape_str());
  Tensor out = tx;
  std::vector<double> xhat(static_cast<size_t>(m * n));
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const double* row = tx.data() + i * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    double* orow = out.data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mu) * inv;
      xhat[static_cast<size_t>(i * n + j)] = xh;
      orow[j] = tg[j] * xh + tb[j];
    }
  }
  return push("layer_norm", {x, gamma, beta}, std::move(out),
              [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int32_t self) {
                auto& nd = t.nodes_[static_cast<size_t>(self)];
                const Tensor& g = t.grads_[static_cast<size_t>(self)];
                const Tensor& vg = t.nodes_[static_cast<size_t>(nd.in[1])].value;
                const bool wx = t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad;
                const bool wg = t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad;
                const bool wb = t.nodes_[static_cast<size_t>(nd.in[2])].requires_grad;
                for (int64_t i = 0; i < m; ++i) {
                  const double* gr = g.data() + i * n;
                  const double* xh = xhat.data() + i * n;
                  if (wg) {
                    Tensor& gg = t.grad_buf(nd.in[1]);
                    for (int64_t j = 0; j < n; ++j) gg[j] += gr[j] * xh[j];
                  }
                  if (wb) {
                    Tensor& gb = t.grad_buf(nd.in[2]);
                    for (int64_t j = 0; j < n; ++j) gb[j] += gr[j];
                  }
                  if (wx) {
                    Tensor& gx = t.grad_buf(nd.in[0]);
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int64_t j = 0; j < n; ++j) {
                      const double dxh = gr[j] * vg[j];
                      mean_dxh += dxh;
                      mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= static_cast<double>(n);
                    mean_dxh_xh /= static_cast<double>(n);
                    const double inv = inv_std[static_cast<size_t>(i)];
                    double* dst = gx.data() + i * n;
                    for (int64_t j = 0; j < n; ++j) {
                      const double dxh = gr[j] * vg[j];
                      dst[j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                  }
                }
              });
}

Var Tape::causal_mask_fill(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || ta.dim(0) != ta.dim(1))
    raise(errc::shape_mismatch, "causal_mask_fill expects square matrix, got " + ta.shape_str());
  const int64_t n = ta.dim(0);
  Tensor out = ta;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) out.at(i, j) = kMaskFill;
  return push("causal_mask_fill", {a}, std::move(out), [n](Tape& t, int32_t self) {
    auto& nd = t.nodes_[static_cast<size_t>(self)];
    if (!t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) return;
    const Tensor& g = t.grads_[static_cast<size_t>(self)];
    Tensor& ga = t.grad_buf(nd.in[0]);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j <= i; ++j) ga.at(i, j) += g.at(i, j);
  });
}

Var Tape::cosine_similarity(Var u, Var v) {
  const Tensor& tu = value(u);
  const Tensor& tv = value(v);
  if (!tu.same_shape(tv))
    raise(errc::shape_mismatch, "cosine_similarity " + tu.shape_str() + " vs " + tv.shape_str());
  double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
  for (int64_t i = 0; i < tu.size(); ++i) {
    dot += tu[i] * tv[i];
    nu2 += tu[i] * tu[i];
    nv2 += tv[i] * tv[i];
  }
  if (nu2 == 0.0 || nv2 == 0.0) raise(errc::zero_norm, "cosine_similarity of zero vector");
  const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
  const double c = dot / (nu * nv);
  return push("cosine_similarity", {u, v}, Tensor::scalar(c),
              [nu, nv, c](Tape& t, int32_t self) {
                auto& nd = t.nodes_[static_cast<size_t>(self)];
                const double g0 = t.grads_[static_cast<size_t>(self)][0];
                const Tensor& vu = t.nodes_[static_cast<size_t>(nd.in[0])].value;
                const Tensor& vv = t.nodes_[static_cast<size_t>(nd.in[1])].value;
                if (t.nodes_[static_cast<size_t>(nd.in[0])].requires_grad) {
                  Tensor& gu = t.grad_buf(nd.in[0]);
                  for (int64_t i = 0; i < gu.size(); ++i)
                    gu[i] += g0 * (vv[i] / (nu * nv) - c * vu[i] / (nu * nu));
                }
                if (t.nodes_[static_cast<size_t>(nd.in[1])].requires_grad) {
                  Tensor& gv = t.grad_buf(nd.in[1]);
                  for (int64_t i = 0; i < gv.size(); ++i)
                    gv[i] += g0 * (vu[i] / (nu * nv) - c * vv[i] / (nv * nv));
                }
              });
}

void Tape::backward(Var loss) {
  if (!loss.valid() || static_cast<size_t>(loss.id) >= nodes_.size())
    raise(errc::disconnected_graph, "backward on invalid var");
  const Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (ln.value.size() != 1) raise(errc::shape_mismatch, "backward expects a scalar loss");
  if (!ln.requires_grad)
    raise(errc::disconnected_graph, "loss does not depend on any differentiable leaf");
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), 0);
  grad_buf(loss.id)[0] = 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    const size_t i = static_cast<size_t>(id);
    if (!has_grad_[i] || !nodes_[i].requires_grad) continue;
    if (nodes_[i].backward) nodes_[i].backward(*this, id);
  }
}

double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               std::vector<double> x, const std::vector<double>& analytic_grad,
                               double h) {
  double max_rel = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic_grad[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

double gradcheck(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 const std::vector<Tensor>& inputs, double h) {
  // Analytic gradients.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
  Var loss = build(tape, leaves);
  tape.backward(loss);

  std::vector<double> flat, analytic;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& v = inputs[i];
    const Tensor& g = tape.grad(leaves[i]);
    flat.insert(flat.end(), v.flat().begin(), v.flat().end());
    analytic.insert(analytic.end(), g.flat().begin(), g.flat().end());
  }

  auto eval = [&](const std::vector<double>& xs) {
    Tape t2;
    std::vector<Var> ls;
    size_t off = 0;
    for (const Tensor& t : inputs) {
      std::vector<double> d(xs.begin() + static_cast<std::ptrdiff_t>(off),
                            xs.begin() + static_cast<std::ptrdiff_t>(off + t.flat().size()));
      off += t.flat().size();
      ls.push_back(t2.leaf(Tensor(t.shape(), std::move(d)), false));
    }
    return t2.value(build(t2, ls)).scalar_value();
  };
  return finite_difference_check(eval, std::move(flat), analytic, h);
}

}  // namespace tsfm
