#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "reco/error.hpp"

namespace reco {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense float64 tensor, row-major. trace_id is a handle into the trace that
// produced the tensor (-1 when the tensor is not on any trace); trace_tag ties
// the handle to one specific Trace instance.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  int trace_id = -1;
  std::uint64_t trace_tag = 0;

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_vector() const { return shape.size() == 1; }
  bool is_scalar() const { return values.size() == 1; }

  double value() const {
    if (values.size() != 1) throw ShapeError("expected a scalar tensor, got shape " + shape_str(shape));
    return values[0];
  }

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  static Tensor zeros(std::vector<std::size_t> shape) {
    if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
      n *= d;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(n, 0.0);
    return t;
  }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (double& x : t.values) x = v;
    return t;
  }

  static Tensor scalar(double v) { return full({1}, v); }

  static Tensor vector(std::vector<double> v) {
    if (v.empty()) throw ShapeError("vector tensor must be non-empty");
    Tensor t;
    t.shape = {v.size()};
    t.values = std::move(v);
    return t;
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dims must be positive");
    if (v.size() != rows * cols)
      throw ShapeError("matrix value count " + std::to_string(v.size()) + " != " + std::to_string(rows * cols));
    Tensor t;
    t.shape = {rows, cols};
    t.values = std::move(v);
    return t;
  }
};

enum class Op : std::uint8_t {
  leaf,
  constant,
  affine,
  add,
  sub,
  mul,
  div,
  sigmoid,
  tanh,
  exp,
  log,
  abs,
  clamp_min,
  scale,
  shift,
  softmax2,
  concat,
  index,
  sum,
};

class Trace;

// Result of a backward pass: per-leaf gradient tensors, addressable either by
// parameter name or by the leased leaf tensor itself.
class Gradients {
 public:
  const std::map<std::string, Tensor>& named() const { return named_; }

  const Tensor& wrt(const Tensor& leaf) const {
    if (leaf.trace_id < 0 || leaf.trace_tag != tag_)
      throw TraceError("tensor is not a leaf of the trace this backward pass ran on");
    auto it = by_node_.find(leaf.trace_id);
    if (it == by_node_.end()) throw TraceError("tensor is not a gradient-carrying leaf");
    return it->second;
  }

 private:
  friend class Trace;
  std::map<std::string, Tensor> named_;
  std::unordered_map<int, Tensor> by_node_;
  std::uint64_t tag_ = 0;
};

namespace detail {
struct TraceAccess;
}

// Records forward operations so that backward() can replay them in exact
// reverse order. One trace per forward pass (or per batch of passes); traces
// are independent of each other.
class Trace {
 public:
  explicit Trace(bool recording = true) : recording_(recording), tag_(next_tag()) {}
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t tag() const { return tag_; }

  // Registers an input tensor. Named leaves are parameters; each name may be
  // leased at most once per trace so gradients accumulate in a single node.
  Tensor leaf(const Tensor& t, std::string name = {}) {
    Tensor out = t;
    if (!recording_) {
      out.trace_id = -1;
      out.trace_tag = 0;
      return out;
    }
    if (!name.empty()) {
      if (!leaf_names_.insert(name).second) throw TraceError("parameter leased twice on one trace: " + name);
    }
    Node n;
    n.op = Op::leaf;
    n.needs_grad = t.requires_grad;
    n.shape = t.shape;
    n.value = t.values;
    n.name = std::move(name);
    out.trace_id = push(std::move(n));
    out.trace_tag = tag_;
    return out;
  }

  Gradients backward(const Tensor& loss) const {
    if (!recording_) throw TraceError("backward on a non-recording trace");
    if (loss.trace_id < 0 || loss.trace_tag != tag_) throw TraceError("loss is not on this trace");
    const int root = loss.trace_id;
    if (nodes_[static_cast<std::size_t>(root)].value.size() != 1) throw TraceError("loss must be a scalar");

    std::vector<std::vector<double>> grad(nodes_.size());
    auto g = [&](int id) -> std::vector<double>& {
      auto& buf = grad[static_cast<std::size_t>(id)];
      if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(id)].value.size(), 0.0);
      return buf;
    };
    g(root)[0] = 1.0;

    for (int id = root; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      const auto& gy = grad[static_cast<std::size_t>(id)];
      if (!n.needs_grad || gy.empty()) continue;
      const bool ga = n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].needs_grad;
      const bool gb = n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].needs_grad;
      const bool gc = n.c >= 0 && nodes_[static_cast<std::size_t>(n.c)].needs_grad;
      switch (n.op) {
        case Op::leaf:
        case Op::constant:
          break;
        case Op::affine: {
          const auto& x = nodes_[static_cast<std::size_t>(n.a)].value;
          const auto& w = nodes_[static_cast<std::size_t>(n.b)].value;
          const std::size_t p = x.size();
          const std::size_t q = gy.size();
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < p; ++i) {
              double acc = 0.0;
              const double* wrow = w.data() + i * q;
              for (std::size_t j = 0; j < q; ++j) acc += wrow[j] * gy[j];
              gx[i] += acc;
            }
          }
          if (gb) {
            auto& gw = g(n.b);
            for (std::size_t i = 0; i < p; ++i) {
              const double xi = x[i];
              double* grow = gw.data() + i * q;
              for (std::size_t j = 0; j < q; ++j) grow[j] += xi * gy[j];
            }
          }
          if (gc) {
            auto& gbias = g(n.c);
            for (std::size_t j = 0; j < q; ++j) gbias[j] += gy[j];
          }
          break;
        }
        case Op::add: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
          }
          if (gb) {
            auto& gx = g(n.b);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
          }
          break;
        }
        case Op::sub: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
          }
          if (gb) {
            auto& gx = g(n.b);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] -= gy[i];
          }
          break;
        }
        case Op::mul: {
          const auto& a = nodes_[static_cast<std::size_t>(n.a)].value;
          const auto& b = nodes_[static_cast<std::size_t>(n.b)].value;
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * b[i];
          }
          if (gb) {
            auto& gx = g(n.b);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * a[i];
          }
          break;
        }
        case Op::div: {
          const auto& a = nodes_[static_cast<std::size_t>(n.a)].value;
          const auto& b = nodes_[static_cast<std::size_t>(n.b)].value;
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] / b[i];
          }
          if (gb) {
            auto& gx = g(n.b);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] -= gy[i] * a[i] / (b[i] * b[i]);
          }
          break;
        }
        case Op::sigmoid: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) {
              const double y = n.value[i];
              gx[i] += gy[i] * y * (1.0 - y);
            }
          }
          break;
        }
        case Op::tanh: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) {
              const double y = n.value[i];
              gx[i] += gy[i] * (1.0 - y * y);
            }
          }
          break;
        }
        case Op::exp: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * n.value[i];
          }
          break;
        }
        case Op::log: {
          if (ga) {
            const auto& a = nodes_[static_cast<std::size_t>(n.a)].value;
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] / a[i];
          }
          break;
        }
        case Op::abs: {
          if (ga) {
            const auto& a = nodes_[static_cast<std::size_t>(n.a)].value;
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) {
              const double s = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
              gx[i] += gy[i] * s;
            }
          }
          break;
        }
        case Op::clamp_min: {
          if (ga) {
            const auto& a = nodes_[static_cast<std::size_t>(n.a)].value;
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i)
              if (a[i] > n.aux) gx[i] += gy[i];
          }
          break;
        }
        case Op::scale: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * n.aux;
          }
          break;
        }
        case Op::shift: {
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
          }
          break;
        }
        case Op::softmax2: {
          if (ga) {
            auto& gx = g(n.a);
            const double s = gy[0] * n.value[0] + gy[1] * n.value[1];
            gx[0] += n.value[0] * (gy[0] - s);
            gx[1] += n.value[1] * (gy[1] - s);
          }
          break;
        }
        case Op::concat: {
          const std::size_t p = nodes_[static_cast<std::size_t>(n.a)].value.size();
          if (ga) {
            auto& gx = g(n.a);
            for (std::size_t i = 0; i < p; ++i) gx[i] += gy[i];
          }
          if (gb) {
            auto& gx = g(n.b);
            for (std::size_t i = p; i < gy.size(); ++i) gx[i - p] += gy[i];
          }
          break;
        }
        case Op::index: {
          if (ga) g(n.a)[static_cast<std::size_t>(n.aux)] += gy[0];
          break;
        }
        case Op::sum: {
          if (ga) {
            auto& gx = g(n.a);
            for (double& v : gx) v += gy[0];
          }
          break;
        }
      }
    }

    Gradients out;
    out.tag_ = tag_;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      if (n.op != Op::leaf || !n.needs_grad) continue;
      Tensor gt;
      gt.shape = n.shape;
      if (grad[id].empty())
        gt.values.assign(n.value.size(), 0.0);
      else
        gt.values = std::move(grad[id]);
      if (!n.name.empty()) out.named_[n.name] = gt;
      out.by_node_.emplace(static_cast<int>(id), std::move(gt));
    }
    return out;
  }

 private:
  friend struct detail::TraceAccess;

  struct Node {
    Op op = Op::constant;
    int a = -1, b = -1, c = -1;
    double aux = 0.0;
    bool needs_grad = false;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::string name;
  };

  static std::uint64_t next_tag() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  int push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int intern(const Tensor& t) {
    if (t.trace_id >= 0) {
      if (t.trace_tag != tag_) throw TraceError("tensor belongs to a different trace");
      return t.trace_id;
    }
    Node n;
    n.op = Op::constant;
    n.needs_grad = false;
    n.shape = t.shape;
    n.value = t.values;
    return push(std::move(n));
  }

  std::vector<Node> nodes_;
  std::unordered_set<std::string> leaf_names_;
  bool recording_;
  std::uint64_t tag_;
};

namespace detail {
struct TraceAccess {
  static int intern(Trace& tr, const Tensor& t) { return tr.intern(t); }

  static Tensor emit(Trace& tr, Op op, std::vector<std::size_t> shape, std::vector<double> values, int a, int b,
                     int c, double aux) {
    Trace::Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.aux = aux;
    n.shape = shape;
    n.value = values;
    n.needs_grad = (a >= 0 && tr.nodes_[static_cast<std::size_t>(a)].needs_grad) ||
                   (b >= 0 && tr.nodes_[static_cast<std::size_t>(b)].needs_grad) ||
                   (c >= 0 && tr.nodes_[static_cast<std::size_t>(c)].needs_grad);
    Tensor out;
    out.shape = std::move(shape);
    out.values = std::move(values);
    out.trace_id = tr.push(std::move(n));
    out.trace_tag = tr.tag();
    return out;
  }
};
}  // namespace detail

namespace detail {

inline void check_vector(const Tensor& t, const char* what) {
  if (t.rank() != 1) throw ShapeError(std::string(what) + ": expected rank-1 tensor, got shape " + shape_str(t.shape));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <class F>
Tensor unary_op(Trace& tr, Op op, const Tensor& a, F f, double aux = 0.0) {
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(a.values[i]);
  if (!tr.recording()) {
    Tensor out;
    out.shape = a.shape;
    out.values = std::move(y);
    return out;
  }
  const int ia = TraceAccess::intern(tr, a);
  return TraceAccess::emit(tr, op, a.shape, std::move(y), ia, -1, -1, aux);
}

template <class F>
Tensor binary_op(Trace& tr, Op op, const Tensor& a, const Tensor& b, const char* what, F f) {
  check_same_shape(a, b, what);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(a.values[i], b.values[i]);
  if (!tr.recording()) {
    Tensor out;
    out.shape = a.shape;
    out.values = std::move(y);
    return out;
  }
  const int ia = TraceAccess::intern(tr, a);
  const int ib = TraceAccess::intern(tr, b);
  return TraceAccess::emit(tr, op, a.shape, std::move(y), ia, ib, -1, 0.0);
}

}  // namespace detail

// y = x W + b with x: [p], W: [p,q], b: [q].
inline Tensor affine(Trace& tr, const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::check_vector(x, "affine input");
  if (w.rank() != 2) throw ShapeError("affine: weight must be rank-2, got shape " + shape_str(w.shape));
  detail::check_vector(b, "affine bias");
  const std::size_t p = x.numel();
  const std::size_t q = w.shape[1];
  if (w.shape[0] != p || b.numel() != q)
    throw ShapeError("affine: input shape " + shape_str(x.shape) + " does not conform to weight shape " +
                     shape_str(w.shape) + " and bias shape " + shape_str(b.shape));
  std::vector<double> y(b.values);
  for (std::size_t i = 0; i < p; ++i) {
    const double xi = x.values[i];
    const double* wrow = w.values.data() + i * q;
    for (std::size_t j = 0; j < q; ++j) y[j] += xi * wrow[j];
  }
  if (!tr.recording()) {
    Tensor out;
    out.shape = {q};
    out.values = std::move(y);
    return out;
  }
  const int ia = detail::TraceAccess::intern(tr, x);
  const int iw = detail::TraceAccess::intern(tr, w);
  const int ib = detail::TraceAccess::intern(tr, b);
  return detail::TraceAccess::emit(tr, Op::affine, {q}, std::move(y), ia, iw, ib, 0.0);
}

inline Tensor add(Trace& tr, const Tensor& a, const Tensor& b) {
  return detail::binary_op(tr, Op::add, a, b, "add", [](double x, double y) { return x + y; });
}

inline Tensor sub(Trace& tr, const Tensor& a, const Tensor& b) {
  return detail::binary_op(tr, Op::sub, a, b, "sub", [](double x, double y) { return x - y; });
}

inline Tensor mul(Trace& tr, const Tensor& a, const Tensor& b) {
  return detail::binary_op(tr, Op::mul, a, b, "mul", [](double x, double y) { return x * y; });
}

inline Tensor div(Trace& tr, const Tensor& a, const Tensor& b) {
  return detail::binary_op(tr, Op::div, a, b, "div", [](double x, double y) { return x / y; });
}

// Numerically stable sigmoid, clamped so outputs stay strictly inside (0,1)
// in float64 even for saturating inputs.
inline Tensor sigmoid(Trace& tr, const Tensor& a) {
  return detail::unary_op(tr, Op::sigmoid, a, [](double x) {
    double y;
    if (x >= 0.0) {
      y = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      y = e / (1.0 + e);
    }
    const double hi = 1.0 - 1.1102230246251565e-16;  // largest double < 1
    if (y > hi) y = hi;
    if (y < 1e-308) y = 1e-308;
    return y;
  });
}

// tanh clamped strictly inside (-1,1) for finite inputs.
inline Tensor tanh(Trace& tr, const Tensor& a) {
  return detail::unary_op(tr, Op::tanh, a, [](double x) {
    double y = std::tanh(x);
    const double hi = 1.0 - 1.1102230246251565e-16;
    if (y > hi) y = hi;
    if (y < -hi) y = -hi;
    return y;
  });
}

inline Tensor exp(Trace& tr, const Tensor& a) {
  return detail::unary_op(tr, Op::exp, a, [](double x) { return std::exp(x); });
}

inline Tensor log(Trace& tr, const Tensor& a) {
  return detail::unary_op(tr, Op::log, a, [](double x) { return std::log(x); });
}

inline Tensor abs(Trace& tr, const Tensor& a) {
  return detail::unary_op(tr, Op::abs, a, [](double x) { return std::fabs(x); });
}

inline Tensor clamp_min(Trace& tr, const Tensor& a, double lo) {
  return detail::unary_op(
      tr, Op::clamp_min, a, [lo](double x) { return x < lo ? lo : x; }, lo);
}

inline Tensor scale(Trace& tr, const Tensor& a, double k) {
  return detail::unary_op(
      tr, Op::scale, a, [k](double x) { return x * k; }, k);
}

inline Tensor shift(Trace& tr, const Tensor& a, double k) {
  return detail::unary_op(
      tr, Op::shift, a, [k](double x) { return x + k; }, k);
}

// Two-way softmax with max-subtraction.
inline Tensor softmax2(Trace& tr, const Tensor& z) {
  detail::check_vector(z, "softmax2");
  if (z.numel() != 2) throw ShapeError("softmax2: expected exactly 2 elements, got shape " + shape_str(z.shape));
  if (!std::isfinite(z.values[0]) || !std::isfinite(z.values[1])) throw Error("softmax2: non-finite input");
  const double m = z.values[0] > z.values[1] ? z.values[0] : z.values[1];
  const double e0 = std::exp(z.values[0] - m);
  const double e1 = std::exp(z.values[1] - m);
  const double s = e0 + e1;
  std::vector<double> y{e0 / s, e1 / s};
  if (!tr.recording()) {
    Tensor out;
    out.shape = {2};
    out.values = std::move(y);
    return out;
  }
  const int ia = detail::TraceAccess::intern(tr, z);
  return detail::TraceAccess::emit(tr, Op::softmax2, {2}, std::move(y), ia, -1, -1, 0.0);
}

inline Tensor concat(Trace& tr, const Tensor& a, const Tensor& b) {
  detail::check_vector(a, "concat");
  detail::check_vector(b, "concat");
  std::vector<double> y;
  y.reserve(a.numel() + b.numel());
  y.insert(y.end(), a.values.begin(), a.values.end());
  y.insert(y.end(), b.values.begin(), b.values.end());
  if (!tr.recording()) {
    Tensor out;
    out.shape = {y.size()};
    out.values = std::move(y);
    return out;
  }
  const int ia = detail::TraceAccess::intern(tr, a);
  const int ib = detail::TraceAccess::intern(tr, b);
  return detail::TraceAccess::emit(tr, Op::concat, {a.numel() + b.numel()}, std::move(y), ia, ib, -1, 0.0);
}

inline Tensor index(Trace& tr, const Tensor& a, std::size_t i) {
  detail::check_vector(a, "index");
  if (i >= a.numel()) throw ShapeError("index " + std::to_string(i) + " out of range for shape " + shape_str(a.shape));
  std::vector<double> y{a.values[i]};
  if (!tr.recording()) {
    Tensor out;
    out.shape = {1};
    out.values = std::move(y);
    return out;
  }
  const int ia = detail::TraceAccess::intern(tr, a);
  return detail::TraceAccess::emit(tr, Op::index, {1}, std::move(y), ia, -1, -1, static_cast<double>(i));
}

inline Tensor sum(Trace& tr, const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values) acc += v;
  std::vector<double> y{acc};
  if (!tr.recording()) {
    Tensor out;
    out.shape = {1};
    out.values = std::move(y);
    return out;
  }
  const int ia = detail::TraceAccess::intern(tr, a);
  return detail::TraceAccess::emit(tr, Op::sum, {1}, std::move(y), ia, -1, -1, 0.0);
}

enum class ElemOp { sigmoid, tanh, exp, sub, add, mul };

// Dispatcher over the elementwise kernel family; binary ops require b.
inline Tensor elementwise(Trace& tr, ElemOp op, const Tensor& a, const Tensor* b = nullptr) {
  const bool binary = op == ElemOp::sub || op == ElemOp::add || op == ElemOp::mul;
  if (binary && b == nullptr) throw ShapeError("elementwise: binary op requires a second operand");
  if (!binary && b != nullptr) throw ShapeError("elementwise: unary op takes a single operand");
  switch (op) {
    case ElemOp::sigmoid:
      return sigmoid(tr, a);
    case ElemOp::tanh:
      return tanh(tr, a);
    case ElemOp::exp:
      return exp(tr, a);
    case ElemOp::sub:
      return sub(tr, a, *b);
    case ElemOp::add:
      return add(tr, a, *b);
    case ElemOp::mul:
      return mul(tr, a, *b);
  }
  throw Error("elementwise: unknown op");
}

}  // namespace reco
