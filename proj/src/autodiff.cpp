#include "mcrfm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcrfm/error.hpp"
#include "mcrfm/geometry.hpp"
#include "mcrfm/kernels.hpp"

namespace mcrfm::ad {

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& m = value();
  if (m.rows != 1 || m.cols != 1) throw InvalidArgument("Var::scalar on a non-scalar");
  return m.data[0];
}

Var Tape::constant(Matrix m) { return push(std::move(m), false, {}); }

Var Tape::param(ParamTensor& p) {
  Var v = push(p.value, true, {});
  nodes_[v.id].param = &p;
  return v;
}

Matrix& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Matrix(n.value.rows, n.value.cols);
  }
  return n.grad;
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw InvalidArgument("backward: variable from another tape");
  const Matrix& lv = value(loss.id);
  if (lv.rows != 1 || lv.cols != 1) throw InvalidArgument("backward: loss must be 1 x 1");
  if (!std::isfinite(lv.data[0])) throw DivergenceError("backward: non-finite loss");
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id).data[0] = 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this);
    if (n.param != nullptr) {
      Matrix& pg = n.param->grad;
      if (!pg.same_shape(n.value)) pg = Matrix(n.value.rows, n.value.cols);
      for (std::size_t k = 0; k < pg.size(); ++k) pg.data[k] += n.grad.data[k];
    }
  }
}

namespace {

bool any_grad(Var a) { return a.tape->requires_grad(a.id); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw InvalidArgument("operands recorded on different tapes");
}

std::size_t bdim(std::size_t a, std::size_t b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw InvalidArgument(std::string(op) + ": incompatible shapes for broadcasting");
}

// Elementwise binary op with broadcasting. F(x, y) -> value; DX/DY give the
// partial derivatives given (x, y, out).
template <class F, class DX, class DY>
Var binary(Var a, Var b, const char* name, F f, DX dx, DY dy) {
  same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t rows = bdim(av.rows, bv.rows, name);
  const std::size_t cols = bdim(av.cols, bv.cols, name);
  const bool a_r = av.rows == 1, a_c = av.cols == 1, b_r = bv.rows == 1, b_c = bv.cols == 1;
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = av(a_r ? 0 : r, a_c ? 0 : c);
      const double y = bv(b_r ? 0 : r, b_c ? 0 : c);
      out(r, c) = f(x, y);
    }
  }
  const std::uint32_t ia = a.id, ib = b.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a, b), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& o = tp.value(io);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(ib);
    Matrix* ga = tp.requires_grad(ia) ? &tp.grad(ia) : nullptr;
    Matrix* gb = tp.requires_grad(ib) ? &tp.grad(ib) : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t ar = a_r ? 0 : r, ac = a_c ? 0 : c;
        const std::size_t br = b_r ? 0 : r, bc = b_c ? 0 : c;
        const double xv = x(ar, ac), yv = y(br, bc), ov = o(r, c), gv = g(r, c);
        if (ga) (*ga)(ar, ac) += gv * dx(xv, yv, ov);
        if (gb) (*gb)(br, bc) += gv * dy(xv, yv, ov);
      }
    }
  });
}

// Elementwise unary op; D gives dy/dx from (x, y).
template <class F, class D>
Var unary(Var a, F f, D d) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (double& v : out.data) v = f(v);
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(io);
    Matrix& gx = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) gx.data[k] += g.data[k] * d(x.data[k], y.data[k]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double k) {
  return unary(
      a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
  return unary(
      a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, softplus_scalar, [](double x, double) { return sigmoid_scalar(x); });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_safe(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
      [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

Var log(Var a) {
  return unary(
      a,
      [](double x) {
        if (!(x > 0.0)) throw DomainError("log of a non-positive value");
        return std::log(x);
      },
      [](double x, double) { return 1.0 / x; });
}

Var linear(Var x, Var w, const Var* bias) {
  same_tape(x, w);
  Tape& t = *x.tape;
  Matrix out;
  kernels::gemm_nt(x.value(), w.value(), out);
  const bool has_bias = bias != nullptr;
  std::uint32_t ib = 0;
  if (has_bias) {
    same_tape(x, *bias);
    const Matrix& bv = bias->value();
    if (bv.rows != 1 || bv.cols != out.cols) throw InvalidArgument("linear: bias shape mismatch");
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += bv.data[c];
    ib = bias->id;
  }
  const bool rg = any_grad(x, w) || (has_bias && any_grad(*bias));
  const std::uint32_t ix = x.id, iw = w.id, io = t.next_id();
  return t.push(std::move(out), rg, [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    if (tp.requires_grad(ix)) {
      Matrix gx;
      kernels::gemm_nn(g, tp.value(iw), gx);
      Matrix& dst = tp.grad(ix);
      for (std::size_t k = 0; k < gx.size(); ++k) dst.data[k] += gx.data[k];
    }
    if (tp.requires_grad(iw)) {
      Matrix gw;
      kernels::gemm_tn(g, tp.value(ix), gw);
      Matrix& dst = tp.grad(iw);
      for (std::size_t k = 0; k < gw.size(); ++k) dst.data[k] += gw.data[k];
    }
    if (has_bias && tp.requires_grad(ib)) {
      Matrix& dst = tp.grad(ib);
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) dst.data[c] += g(r, c);
    }
  });
}

Var linear(Var x, Var w, Var bias) { return linear(x, w, &bias); }

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = *a.tape;
  Matrix out;
  kernels::gemm_nn(a.value(), b.value(), out);
  const std::uint32_t ia = a.id, ib = b.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a, b), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    if (tp.requires_grad(ia)) {
      Matrix ga;
      kernels::gemm_nt(g, tp.value(ib), ga);
      Matrix& dst = tp.grad(ia);
      for (std::size_t k = 0; k < ga.size(); ++k) dst.data[k] += ga.data[k];
    }
    if (tp.requires_grad(ib)) {
      Matrix gb;
      kernels::gemm_tn(tp.value(ia), g, gb);
      Matrix& dst = tp.grad(ib);
      for (std::size_t k = 0; k < gb.size(); ++k) dst.data[k] += gb.data[k];
    }
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  Matrix out(av.rows, 1);
  for (std::size_t r = 0; r < av.rows; ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out.data[r] = s;
  }
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < ga.rows; ++r)
      for (double& v : ga.row(r)) v += g.data[r];
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  if (av.rows == 0) throw InvalidArgument("mean_rows of an empty matrix");
  Matrix out(1, av.cols);
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = 0; c < av.cols; ++c) out.data[c] += av(r, c);
  const double inv = 1.0 / static_cast<double>(av.rows);
  for (double& v : out.data) v *= inv;
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < ga.rows; ++r)
      for (std::size_t c = 0; c < ga.cols; ++c) ga(r, c) += inv * g.data[c];
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(Matrix(1, 1, s), any_grad(a), [=](Tape& tp) {
    const double g = tp.grad(io).data[0];
    for (double& v : tp.grad(ia).data) v += g;
  });
}

Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw InvalidArgument("mean_all of an empty matrix");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var max_all(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  if (av.size() == 0) throw InvalidArgument("max_all of an empty matrix");
  const std::size_t arg =
      static_cast<std::size_t>(std::max_element(av.data.begin(), av.data.end()) - av.data.begin());
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(Matrix(1, 1, av.data[arg]), any_grad(a),
                [=](Tape& tp) { tp.grad(ia).data[arg] += tp.grad(io).data[0]; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) throw InvalidArgument("concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || any_grad(p);
  }
  Matrix out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + off);
    off += pv.cols;
    ids.push_back(p.id);
  }
  const std::uint32_t io = t.next_id();
  return t.push(std::move(out), rg, [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    std::size_t o = 0;
    for (std::uint32_t id : ids) {
      const std::size_t w = tp.value(id).cols;
      if (tp.requires_grad(id)) {
        Matrix& gp = tp.grad(id);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, o + c);
      }
      o += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.cols() != cols) throw InvalidArgument("concat_rows: column count mismatch");
    rows += p.rows();
    rg = rg || any_grad(p);
  }
  Matrix out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.size();
    ids.push_back(p.id);
  }
  const std::uint32_t io = t.next_id();
  return t.push(std::move(out), rg, [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    std::size_t o = 0;
    for (std::uint32_t id : ids) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        Matrix& gp = tp.grad(id);
        for (std::size_t k = 0; k < n; ++k) gp.data[k] += g.data[o + k];
      }
      o += n;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  if (start + count > av.cols) throw InvalidArgument("slice_cols: range out of bounds");
  Matrix out(av.rows, count);
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, start + c) += g(r, c);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  Matrix out(index.size(), av.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.rows) throw InvalidArgument("gather_rows: index out of range");
    std::copy(av.row(index[i]).begin(), av.row(index[i]).end(), out.row(i).begin());
  }
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=, idx = std::move(index)](Tape& tp) {
    const Matrix& g = tp.grad(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = g.row(i);
      auto dst = ga.row(idx[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape;
  if (rows * cols != a.value().size()) throw InvalidArgument("reshape: element count mismatch");
  Matrix out(rows, cols, a.value().data);
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += g.data[k];
  });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

Var layer_norm(Var a, double eps) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  Matrix out(av.rows, av.cols);
  Matrix inv_std(av.rows, 1);
  const std::size_t n = av.cols;
  for (std::size_t r = 0; r < av.rows && n > 0; ++r) {
    auto x = av.row(r);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std.data[r] = is;
    for (std::size_t c = 0; c < n; ++c) out(r, c) = (x[c] - mean) * is;
  }
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=, is = std::move(inv_std)](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad(ia);
    const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    for (std::size_t r = 0; r < g.rows && n > 0; ++r) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        mg += g(r, c);
        mgy += g(r, c) * y(r, c);
      }
      mg *= inv_n;
      mgy *= inv_n;
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += is.data[r] * (g(r, c) - mg - y(r, c) * mgy);
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto x = out.row(r);
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double& v : x) {
      v = std::exp(v - m);
      s += v;
    }
    for (double& v : x) v /= s;
  }
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto x = out.row(r);
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (double& v : x) v -= lse;
  }
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& y = tp.value(io);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) gs += g(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
    }
  });
}

namespace {

// Below this value of s = sqrt(c)|u| the backward passes use Taylor series.
constexpr double kSeries = 1e-4;

// Shared shape of the radial maps y = f(|x|) x. `coef` returns (f, f'(n)/n).
template <class Forward, class Coef>
Var radial(Var a, Forward fwd, Coef coef) {
  Tape& t = *a.tape;
  const Matrix& av = a.value();
  Matrix out(av.rows, av.cols);
  kernels::for_rows(av.rows, av.cols, [&](std::size_t r) { fwd(av.row(r), out.row(r)); });
  const std::uint32_t ia = a.id, io = t.next_id();
  return t.push(std::move(out), any_grad(a), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& x = tp.value(ia);
    Matrix& ga = tp.grad(ia);
    for (std::size_t r = 0; r < g.rows; ++r) {
      auto xr = x.row(r);
      auto gr = g.row(r);
      const double n = geo::row::norm(xr);
      const auto [f, dfn] = coef(n);
      const double xg = geo::row::dot(xr, gr);
      auto dst = ga.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += f * gr[c] + dfn * xg * xr[c];
    }
  });
}

}  // namespace

Var exp0(Var u, double c) {
  const double sc = std::sqrt(c);
  return radial(
      u, [sc](auto in, auto out) { geo::row::exp0(in, sc, out); },
      [sc, c](double n) -> std::pair<double, double> {
        const double s = sc * n;
        if (s < kSeries) {
          const double s2 = s * s;
          return {1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0, c * (-2.0 / 3.0 + 8.0 * s2 / 15.0)};
        }
        const double th = std::tanh(s);
        const double f = th / s;
        const double dfds = (s * (1.0 - th * th) - th) / (s * s);
        return {f, sc * dfds / n};
      });
}

Var log0(Var x, double c) {
  const double sc = std::sqrt(c);
  return radial(
      x, [sc](auto in, auto out) { geo::row::log0(in, sc, out); },
      [sc, c](double n) -> std::pair<double, double> {
        const double s = sc * n;
        if (s < kSeries) {
          const double s2 = s * s;
          return {1.0 + s2 / 3.0 + s2 * s2 / 5.0, c * (2.0 / 3.0 + 4.0 * s2 / 5.0)};
        }
        const double at = std::atanh(s);
        const double h = at / s;
        const double dhds = (s / (1.0 - s * s) - at) / (s * s);
        return {h, sc * dhds / n};
      });
}

Var project_ball(Var x, double c, double eps) {
  Tape& t = *x.tape;
  const double sc = std::sqrt(c);
  const Matrix& xv = x.value();
  Matrix out(xv.rows, xv.cols);
  std::vector<double> factor(xv.rows, 1.0);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    for (double v : xv.row(r)) {
      if (!std::isfinite(v)) throw DivergenceError("project_ball: non-finite state");
    }
    if (geo::row::project(xv.row(r), sc, eps, out.row(r))) {
      const double n = geo::row::norm(xv.row(r));
      factor[r] = geo::row::norm(out.row(r)) / n;
    }
  }
  const std::uint32_t ix = x.id, io = t.next_id();
  return t.push(std::move(out), any_grad(x), [=, k = std::move(factor)](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& xs = tp.value(ix);
    Matrix& gx = tp.grad(ix);
    for (std::size_t r = 0; r < g.rows; ++r) {
      auto gr = g.row(r);
      auto dst = gx.row(r);
      if (k[r] == 1.0) {
        for (std::size_t c2 = 0; c2 < dst.size(); ++c2) dst[c2] += gr[c2];
        continue;
      }
      // y = k x with k = L / (sqrt(c)|x|): dy/dx = k (I - x x^T / |x|^2).
      auto xr = xs.row(r);
      const double n2 = geo::row::dot(xr, xr);
      const double xg = geo::row::dot(xr, gr);
      for (std::size_t c2 = 0; c2 < dst.size(); ++c2) dst[c2] += k[r] * (gr[c2] - xg * xr[c2] / n2);
    }
  });
}

Var mobius_add_raw(Var x, Var y, double c) {
  Var xy = row_sum(mul(x, y));
  Var x2 = row_sum(square(x));
  Var y2 = row_sum(square(y));
  Var two_cxy = scale(xy, 2.0 * c);
  Var a = add_scalar(add(two_cxy, scale(y2, c)), 1.0);
  Var b = add_scalar(scale(x2, -c), 1.0);
  Var den = add_scalar(add(two_cxy, scale(mul(x2, y2), c * c)), 1.0);
  return div(add(mul(a, x), mul(b, y)), den);
}

Var ball_sq_norm_dist(Var w, double c) {
  Tape& t = *w.tape;
  const double sc = std::sqrt(c);
  const Matrix& wv = w.value();
  Matrix out(wv.rows, 1);
  for (std::size_t r = 0; r < wv.rows; ++r) {
    const double d = 2.0 / sc * geo::row::artanh_safe(sc * geo::row::norm(wv.row(r)));
    out.data[r] = d * d;
  }
  const std::uint32_t iw = w.id, io = t.next_id();
  return t.push(std::move(out), any_grad(w), [=](Tape& tp) {
    const Matrix& g = tp.grad(io);
    const Matrix& ws = tp.value(iw);
    Matrix& gw = tp.grad(iw);
    for (std::size_t r = 0; r < ws.rows; ++r) {
      auto wr = ws.row(r);
      const double s = sc * geo::row::norm(wr);
      // d/dw (4/c) artanh(s)^2 = 8 (artanh(s)/s) / (1 - s^2) w
      const double ratio = s < kSeries ? 1.0 + s * s / 3.0 : geo::row::artanh_safe(s) / s;
      const double k = g.data[r] * 8.0 * ratio / (1.0 - s * s);
      auto dst = gw.row(r);
      for (std::size_t c2 = 0; c2 < dst.size(); ++c2) dst[c2] += k * wr[c2];
    }
  });
}

}  // namespace mcrfm::ad
