#include "baet/autodiff/graph.hpp"

#include <algorithm>
#include <cmath>

namespace baet::ad {

namespace {

constexpr double kProbFloor = 1e-12;

std::string pair_shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string();
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Graph::check(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) throw std::out_of_range("Var not recorded on this graph");
}

Var Graph::push(Tensor value, bool requires_grad,
                std::function<void(Graph&, const Tensor&)> bw) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

Tensor& Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && val(id).size() != 0) {
    const Tensor& v = val(id);
    n.grad = Tensor(v.rows(), v.cols());
  }
  return n.grad;
}

Var Graph::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Graph::variable(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Graph::parameter(const Tensor& storage, bool sparse_grad) {
  Node n;
  n.external = &storage;
  n.requires_grad = true;
  n.sparse = sparse_grad;
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return val(v.id());
}

Tensor Graph::grad(Var v) const {
  check(v);
  const Tensor& x = val(v.id());
  Tensor out(x.rows(), x.cols());
  accumulate_grad(v, out);
  return out;
}

void Graph::accumulate_grad(Var v, Tensor& out) const {
  check(v);
  const Node& n = nodes_[v.id()];
  if (!n.grad.empty()) out.add_scaled(n.grad);
  for (const auto& [row, g] : n.sparse_rows) {
    auto dst = out.row_span(row);
    for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
  }
}

Var Graph::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id());
  const Tensor& B = val(b.id());
  if (A.cols() != B.rows()) throw ShapeMismatch(pair_shapes("matmul", A, B));
  Tensor out(A.rows(), B.cols());
  kernels::gemm_nn(A, B, out);
  const std::size_t ia = a.id(), ib = b.id();
  return push(std::move(out), needs(a) || needs(b), [ia, ib](Graph& g, const Tensor& dout) {
    if (g.nodes_[ia].requires_grad) kernels::gemm_nt(dout, g.val(ib), g.grad_slot(ia));
    if (g.nodes_[ib].requires_grad) kernels::gemm_tn(g.val(ia), dout, g.grad_slot(ib));
  });
}

Var Graph::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id());
  const Tensor& B = val(b.id());
  const bool broadcast = !A.same_shape(B);
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols())) {
    throw ShapeMismatch(pair_shapes("add", A, B));
  }
  Tensor out = A;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    auto o = out.row_span(r);
    auto brow = B.row_span(broadcast ? 0 : r);
    for (std::size_t c = 0; c < A.cols(); ++c) o[c] += brow[c];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib, broadcast](Graph& g, const Tensor& dout) {
                if (g.nodes_[ia].requires_grad) g.grad_slot(ia).add_scaled(dout);
                if (g.nodes_[ib].requires_grad) {
                  Tensor& gb = g.grad_slot(ib);
                  if (!broadcast) {
                    gb.add_scaled(dout);
                  } else {
                    for (std::size_t r = 0; r < dout.rows(); ++r)
                      for (std::size_t c = 0; c < dout.cols(); ++c) gb[c] += dout(r, c);
                  }
                }
              });
}

Var Graph::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id());
  const Tensor& B = val(b.id());
  if (!A.same_shape(B)) throw ShapeMismatch(pair_shapes("sub", A, B));
  Tensor out = A;
  out.add_scaled(B, -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return push(std::move(out), needs(a) || needs(b), [ia, ib](Graph& g, const Tensor& dout) {
    if (g.nodes_[ia].requires_grad) g.grad_slot(ia).add_scaled(dout);
    if (g.nodes_[ib].requires_grad) g.grad_slot(ib).add_scaled(dout, -1.0);
  });
}

Var Graph::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id());
  const Tensor& B = val(b.id());
  if (!A.same_shape(B)) throw ShapeMismatch(pair_shapes("mul", A, B));
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return push(std::move(out), needs(a) || needs(b), [ia, ib](Graph& g, const Tensor& dout) {
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_slot(ia);
      const Tensor& B = g.val(ib);
      for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i] * B[i];
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_slot(ib);
      const Tensor& A = g.val(ia);
      for (std::size_t i = 0; i < dout.size(); ++i) gb[i] += dout[i] * A[i];
    }
  });
}

Var Graph::scale(Var a, double s) {
  check(a);
  Tensor out = val(a.id());
  for (double& x : out.values()) x *= s;
  const std::size_t ia = a.id();
  return push(std::move(out), needs(a), [ia, s](Graph& g, const Tensor& dout) {
    g.grad_slot(ia).add_scaled(dout, s);
  });
}

Var Graph::row_scale(Var x, Var s) {
  check(x);
  check(s);
  const Tensor& X = val(x.id());
  const Tensor& S = val(s.id());
  if (S.cols() != 1 || S.rows() != X.rows()) throw ShapeMismatch(pair_shapes("row_scale", X, S));
  Tensor out(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = X(r, c) * S(r, 0);
  const std::size_t ix = x.id(), is = s.id();
  return push(std::move(out), needs(x) || needs(s), [ix, is](Graph& g, const Tensor& dout) {
    const Tensor& X = g.val(ix);
    const Tensor& S = g.val(is);
    if (g.nodes_[ix].requires_grad) {
      Tensor& gx = g.grad_slot(ix);
      for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) gx(r, c) += dout(r, c) * S(r, 0);
    }
    if (g.nodes_[is].requires_grad) {
      Tensor& gs = g.grad_slot(is);
      for (std::size_t r = 0; r < X.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < X.cols(); ++c) acc += dout(r, c) * X(r, c);
        gs(r, 0) += acc;
      }
    }
  });
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  std::size_t rows = 0;
  const std::size_t cols = value(parts[0]).cols();
  bool rg = false;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.cols() != cols) throw ShapeMismatch(pair_shapes("concat_rows", value(parts[0]), t));
    rows += t.rows();
    rg = rg || needs(p);
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& t = val(p.id());
    std::copy(t.data(), t.data() + t.size(), out.data() + offset * cols);
    offset += t.rows();
    ids.push_back(p.id());
  }
  return push(std::move(out), rg, [ids = std::move(ids)](Graph& g, const Tensor& dout) {
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = g.val(id).size();
      if (g.nodes_[id].requires_grad) {
        Tensor& gi = g.grad_slot(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += dout[offset + i];
      }
      offset += n;
    }
  });
}

Var Graph::concat_cols(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id());
  const Tensor& B = val(b.id());
  if (A.rows() != B.rows()) throw ShapeMismatch(pair_shapes("concat_cols", A, B));
  const std::size_t ca = A.cols(), cb = B.cols();
  Tensor out(A.rows(), ca + cb);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    std::copy_n(A.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(B.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return push(std::move(out), needs(a) || needs(b),
              [ia, ib, ca, cb](Graph& g, const Tensor& dout) {
                const std::size_t rows = dout.rows();
                if (g.nodes_[ia].requires_grad) {
                  Tensor& ga = g.grad_slot(ia);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < ca; ++c) ga(r, c) += dout(r, c);
                }
                if (g.nodes_[ib].requires_grad) {
                  Tensor& gb = g.grad_slot(ib);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cb; ++c) gb(r, c) += dout(r, ca + c);
                }
              });
}

Var Graph::transpose(Var a) {
  check(a);
  const std::size_t ia = a.id();
  return push(val(ia).transposed(), needs(a), [ia](Graph& g, const Tensor& dout) {
    g.grad_slot(ia).add_scaled(dout.transposed());
  });
}

Var Graph::sigmoid(Var a) {
  check(a);
  Tensor out = val(a.id());
  for (double& x : out.values()) x = sigmoid_scalar(x);
  const std::size_t ia = a.id();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(a), [ia, self](Graph& g, const Tensor& dout) {
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_slot(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += dout[i] * y[i] * (1.0 - y[i]);
  });
}

Var Graph::tanh(Var a) {
  check(a);
  Tensor out = val(a.id());
  for (double& x : out.values()) x = std::tanh(x);
  const std::size_t ia = a.id();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(a), [ia, self](Graph& g, const Tensor& dout) {
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_slot(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += dout[i] * (1.0 - y[i] * y[i]);
  });
}

namespace {

void softmax_row_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double& x : row) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : row) x /= z;
}

// dx = y * (dy - <dy, y>) per row, accumulated into dx.
void softmax_row_backward(std::span<const double> y, std::span<const double> dy,
                          std::span<double> dx) {
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (dy[i] - dot);
}

}  // namespace

Var Graph::softmax_rows(Var a) {
  check(a);
  Tensor out = val(a.id());
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_row_inplace(out.row_span(r));
  const std::size_t ia = a.id();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(a), [ia, self](Graph& g, const Tensor& dout) {
    const Tensor& y = g.val(self);
    Tensor& ga = g.grad_slot(ia);
    for (std::size_t r = 0; r < y.rows(); ++r)
      softmax_row_backward(y.row_span(r), dout.row_span(r), ga.row_span(r));
  });
}

Var Graph::attention(Var q, Var k, Var v, MaskView key_mask) {
  check(q);
  check(k);
  check(v);
  const Tensor& Q = val(q.id());
  const Tensor& K = val(k.id());
  const Tensor& V = val(v.id());
  if (Q.cols() != K.cols()) throw ShapeMismatch(pair_shapes("attention(Q,K)", Q, K));
  if (K.rows() != V.rows()) throw ShapeMismatch(pair_shapes("attention(K,V)", K, V));
  if (!key_mask.empty() && key_mask.size() != K.rows()) {
    throw ShapeMismatch("attention: key mask of length " + std::to_string(key_mask.size()) +
                        " for keys " + K.shape_string());
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  const std::size_t n = Q.rows(), m = K.rows();

  Tensor probs(n, m);
  kernels::gemm_nt(Q, K, probs);
  const bool masked = !key_mask.empty();
  const bool any_key =
      !masked || std::any_of(key_mask.begin(), key_mask.end(), [](std::uint8_t m) { return m != 0; });
  for (std::size_t r = 0; r < n; ++r) {
    auto row = probs.row_span(r);
    if (!any_key) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      row[j] *= inv_sqrt;
      if (!masked || key_mask[j]) mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = (!masked || key_mask[j]) ? std::exp(row[j] - mx) : 0.0;
      z += row[j];
    }
    for (double& x : row) x /= z;
  }
  Tensor out(n, V.cols());
  kernels::gemm_nn(probs, V, out);

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  const std::size_t self = nodes_.size();
  const bool rg = needs(q) || needs(k) || needs(v);
  Var result = push(std::move(out), rg,
              [iq, ik, iv, inv_sqrt, self](Graph& g, const Tensor& dout) {
                const Tensor& probs = g.nodes_[self].aux;
                const Tensor& Q = g.val(iq);
                const Tensor& K = g.val(ik);
                const Tensor& V = g.val(iv);
                if (g.nodes_[iv].requires_grad) kernels::gemm_tn(probs, dout, g.grad_slot(iv));
                if (!g.nodes_[iq].requires_grad && !g.nodes_[ik].requires_grad) return;
                Tensor dprobs(probs.rows(), probs.cols());
                kernels::gemm_nt(dout, V, dprobs);
                Tensor dscores(probs.rows(), probs.cols());
                for (std::size_t r = 0; r < probs.rows(); ++r)
                  softmax_row_backward(probs.row_span(r), dprobs.row_span(r),
                                       dscores.row_span(r));
                for (double& x : dscores.values()) x *= inv_sqrt;
                if (g.nodes_[iq].requires_grad) kernels::gemm_nn(dscores, K, g.grad_slot(iq));
                if (g.nodes_[ik].requires_grad) kernels::gemm_tn(dscores, Q, g.grad_slot(ik));
              });
  nodes_[self].aux = std::move(probs);
  return result;
}

Var Graph::max_elementwise(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("max_elementwise: no inputs");
  const Tensor& first = value(parts[0]);
  bool rg = false;
  for (Var p : parts) {
    if (!value(p).same_shape(first)) throw ShapeMismatch(pair_shapes("max_elementwise", first, value(p)));
    rg = rg || needs(p);
  }
  Tensor out = first;
  std::vector<std::size_t> argmax(first.size(), 0);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Tensor& t = val(parts[p].id());
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] > out[i]) {
        out[i] = t[i];
        argmax[i] = p;
      }
    }
  }
  std::vector<std::size_t> ids;
  for (Var p : parts) ids.push_back(p.id());
  return push(std::move(out), rg,
              [ids = std::move(ids), argmax = std::move(argmax)](Graph& g, const Tensor& dout) {
                for (std::size_t i = 0; i < argmax.size(); ++i) {
                  const std::size_t id = ids[argmax[i]];
                  if (g.nodes_[id].requires_grad) g.grad_slot(id)[i] += dout[i];
                }
              });
}

Var Graph::mean_rows(Var x, MaskView row_mask) {
  check(x);
  const Tensor& X = val(x.id());
  if (!row_mask.empty() && row_mask.size() != X.rows()) {
    throw ShapeMismatch("mean_rows: mask of length " + std::to_string(row_mask.size()) +
                        " for " + X.shape_string());
  }
  std::vector<bool> mask(X.rows(), true);
  for (std::size_t r = 0; r < row_mask.size(); ++r) mask[r] = row_mask[r] != 0;
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw AllPadding("mean_rows: no unmasked rows in " + X.shape_string());
  Tensor out(1, X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < X.cols(); ++c) out[c] += X(r, c);
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out.values()) v *= inv;
  const std::size_t ix = x.id();
  return push(std::move(out), needs(x), [ix, inv, mask = std::move(mask)](Graph& g, const Tensor& dout) {
    Tensor& gx = g.grad_slot(ix);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      if (!mask[r]) continue;
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += dout[c] * inv;
    }
  });
}

Var Graph::gather_rows(Var table, std::span<const std::size_t> indices) {
  check(table);
  const Tensor& T = val(table.id());
  const std::size_t cols = T.cols();
  Tensor out(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= T.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[r]) +
                              " outside table " + T.shape_string());
    }
    std::copy_n(T.data() + indices[r] * cols, cols, out.data() + r * cols);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return push(std::move(out), needs(table), [it, cols, idx = std::move(idx)](Graph& g, const Tensor& dout) {
    Node& t = g.nodes_[it];
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* src = dout.data() + r * cols;
      if (t.sparse) {
        auto& row = t.sparse_rows[idx[r]];
        if (row.empty()) row.assign(cols, 0.0);
        for (std::size_t c = 0; c < cols; ++c) row[c] += src[c];
      } else {
        Tensor& gt = g.grad_slot(it);
        for (std::size_t c = 0; c < cols; ++c) gt(idx[r], c) += src[c];
      }
    }
  });
}

Var Graph::dropout(Var x, double p, Mode mode, std::mt19937_64& rng) {
  check(x);
  if (mode == Mode::eval || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Tensor& X = val(x.id());
  Tensor mask(X.rows(), X.cols());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask.values()) m = keep(rng) ? s : 0.0;
  Tensor out(X.rows(), X.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * mask[i];
  const std::size_t ix = x.id();
  return push(std::move(out), needs(x), [ix, mask = std::move(mask)](Graph& g, const Tensor& dout) {
    Tensor& gx = g.grad_slot(ix);
    for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i] * mask[i];
  });
}

Var Graph::sum(Var a) {
  check(a);
  double s = 0.0;
  for (double v : val(a.id()).values()) s += v;
  const std::size_t ia = a.id();
  return push(Tensor(1, 1, s), needs(a), [ia](Graph& g, const Tensor& dout) {
    for (double& x : g.grad_slot(ia).values()) x += dout[0];
  });
}

Var Graph::sum_squares(Var a) {
  check(a);
  double s = 0.0;
  for (double v : val(a.id()).values()) s += v * v;
  const std::size_t ia = a.id();
  return push(Tensor(1, 1, s), needs(a), [ia](Graph& g, const Tensor& dout) {
    const Tensor& A = g.val(ia);
    Tensor& ga = g.grad_slot(ia);
    for (std::size_t i = 0; i < A.size(); ++i) ga[i] += 2.0 * A[i] * dout[0];
  });
}

Var Graph::nll(Var probs, std::size_t label) {
  check(probs);
  const Tensor& P = val(probs.id());
  if (P.rows() != 1 || label >= P.cols()) {
    throw ShapeMismatch("nll: label " + std::to_string(label) + " for probabilities " + P.shape_string());
  }
  const double p = P[label];
  const double clamped = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  const std::size_t ip = probs.id();
  return push(Tensor(1, 1, -std::log(clamped)), needs(probs),
              [ip, label, p, clamped](Graph& g, const Tensor& dout) {
                if (p != clamped) return;
                g.grad_slot(ip)[label] += -dout[0] / p;
              });
}

void Graph::backward(Var loss) {
  check(loss);
  const Tensor& L = val(loss.id());
  if (L.rows() != 1 || L.cols() != 1) {
    throw NotScalarLoss("backward: loss must be 1x1, got " + L.shape_string());
  }
  if (!std::isfinite(L[0])) throw NonFiniteLoss("backward: loss is not finite");
  if (!nodes_[loss.id()].requires_grad) return;
  grad_slot(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace baet::ad
