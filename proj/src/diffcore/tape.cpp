#include "scal/diffcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace scal::diff {

// ---------------------------------------------------------------------------
// ParameterSet

void ParameterSet::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw std::invalid_argument("parameter '" + name + "' already exists");
  }
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::uint64_t ParameterSet::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params_) {
    mix(name.data(), name.size());
    const auto shape = t.shape();
    mix(shape.data(), sizeof(shape));
    mix(t.values().data(), t.size() * sizeof(double));
  }
  return h;
}

GradientMap zero_gradients(const ParameterSet& params) {
  GradientMap g;
  for (const auto& [name, t] : params) g.emplace(name, Tensor(t.rows(), t.cols()));
  return g;
}

void accumulate(GradientMap& into, const GradientMap& from, double weight) {
  for (const auto& [name, t] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor scaled = t;
      scaled *= weight;
      into.emplace(name, std::move(scaled));
      continue;
    }
    if (!it->second.same_shape(t)) {
      throw ShapeError("accumulate '" + name + "': " + shape_string(it->second) + " vs " +
                       shape_string(t));
    }
    for (std::size_t i = 0; i < t.size(); ++i) it->second[i] += weight * t[i];
  }
}

void scale(GradientMap& grads, double s) {
  for (auto& [_, t] : grads) t *= s;
}

// ---------------------------------------------------------------------------
// Tape internals

void Tape::check_var(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown node id");
}

const Tensor& Tape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const {
  check_var(v);
  return val(v.id);
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Tensor& v = val(id);
    n.grad = Tensor(v.rows(), v.cols());
  }
  return n.grad;
}

bool Tape::any_requires(std::initializer_list<Var> vs) const {
  if (!record_) return false;
  for (Var v : vs) {
    if (nodes_[v.id].requires_grad) return true;
  }
  return false;
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents,
               std::function<void(Tape&, const Node&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = any_requires(parents);
  if (n.requires_grad) {
    n.backward = std::move(backward);
    for (Var p : parents) n.parents.push_back(p.id);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const ParameterSet& params, const std::string& name) {
  Node n;
  n.external = &params.get(name);
  if (record_ && !params.frozen()) {
    n.requires_grad = true;
    n.param_name = name;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

// ---------------------------------------------------------------------------
// Primitives

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  check_var(a);
  check_var(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  const std::size_t inner = A.cols();
  const std::size_t b_inner = transpose_b ? B.cols() : B.rows();
  if (inner != b_inner) {
    throw ShapeError("matmul: " + shape_string(A) + " x " + shape_string(B) +
                     (transpose_b ? "^T" : ""));
  }
  const std::size_t m = A.rows();
  const std::size_t n = transpose_b ? B.rows() : B.cols();
  Tensor out(m, n);
  if (transpose_b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < inner; ++k) s += A(i, k) * B(j, k);
        out(i, j) = s;
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < inner; ++k) {
        const double aik = A(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * B(k, j);
      }
    }
  }
  return push(std::move(out), {a, b}, [a, b, transpose_b, m, n, inner](Tape& t, const Node& self) {
    const Tensor& G = self.grad;
    const Tensor& A = t.val(a.id);
    const Tensor& B = t.val(b.id);
    if (t.nodes_[a.id].requires_grad) {
      Tensor& gA = t.grad_slot(a.id);
      // dA = G * B^T  (or G * B when B was transposed)
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G(i, j);
          if (g == 0.0) continue;
          for (std::size_t k = 0; k < inner; ++k) {
            gA(i, k) += g * (transpose_b ? B(j, k) : B(k, j));
          }
        }
      }
    }
    if (t.nodes_[b.id].requires_grad) {
      Tensor& gB = t.grad_slot(b.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < inner; ++k) {
          const double aik = A(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            if (transpose_b) {
              gB(j, k) += aik * G(i, j);
            } else {
              gB(k, j) += aik * G(i, j);
            }
          }
        }
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  const bool broadcast = !A.same_shape(B);
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols())) {
    throw ShapeError("add: " + shape_string(A) + " + " + shape_string(B));
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += broadcast ? B[i % B.cols()] : B[i];
  return push(std::move(out), {a, b}, [a, b, broadcast](Tape& t, const Node& self) {
    if (t.nodes_[a.id].requires_grad) t.grad_slot(a.id) += self.grad;
    if (t.nodes_[b.id].requires_grad) {
      Tensor& gB = t.grad_slot(b.id);
      if (!broadcast) {
        gB += self.grad;
      } else {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gB[i % gB.cols()] += self.grad[i];
      }
    }
  });
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::scale(Var a, double s) {
  check_var(a);
  Tensor out = val(a.id);
  out *= s;
  return push(std::move(out), {a}, [a, s](Tape& t, const Node& self) {
    Tensor& gA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < gA.size(); ++i) gA[i] += s * self.grad[i];
  });
}

Var Tape::mul(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (!A.same_shape(B)) throw ShapeError("mul: " + shape_string(A) + " * " + shape_string(B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
    const Tensor& A = t.val(a.id);
    const Tensor& B = t.val(b.id);
    if (t.nodes_[a.id].requires_grad) {
      Tensor& gA = t.grad_slot(a.id);
      for (std::size_t i = 0; i < gA.size(); ++i) gA[i] += self.grad[i] * B[i];
    }
    if (t.nodes_[b.id].requires_grad) {
      Tensor& gB = t.grad_slot(b.id);
      for (std::size_t i = 0; i < gB.size(); ++i) gB[i] += self.grad[i] * A[i];
    }
  });
}

Var Tape::relu(Var a) {
  check_var(a);
  Tensor out = val(a.id);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), {a}, [a](Tape& t, const Node& self) {
    const Tensor& A = t.val(a.id);
    Tensor& gA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < gA.size(); ++i) {
      if (A[i] > 0.0) gA[i] += self.grad[i];
    }
  });
}

Var Tape::softmax(Var a, std::optional<std::size_t> causal_offset) {
  check_var(a);
  const Tensor& A = val(a.id);
  Tensor out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::size_t limit =
        causal_offset ? std::min(A.cols(), r + *causal_offset + 1) : A.cols();
    if (limit == 0) throw ShapeError("softmax: row " + std::to_string(r) + " fully masked");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < limit; ++c) mx = std::max(mx, A(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < limit; ++c) {
      out(r, c) = std::exp(A(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < limit; ++c) out(r, c) /= z;
  }
  const Var result = push(std::move(out), {a}, nullptr);
  if (nodes_[result.id].requires_grad) {
    nodes_[result.id].backward = [a](Tape& t, const Node& self) {
      const Tensor& Y = self.value;
      Tensor& gA = t.grad_slot(a.id);
      for (std::size_t r = 0; r < Y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < Y.cols(); ++c) dot += Y(r, c) * self.grad(r, c);
        for (std::size_t c = 0; c < Y.cols(); ++c) gA(r, c) += Y(r, c) * (self.grad(r, c) - dot);
      }
    };
  }
  return result;
}

Var Tape::log_softmax(Var a) {
  check_var(a);
  const Tensor& A = val(a.id);
  Tensor out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < A.cols(); ++c) mx = std::max(mx, A(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) z += std::exp(A(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) = A(r, c) - lse;
  }
  const Var result = push(std::move(out), {a}, nullptr);
  if (nodes_[result.id].requires_grad) {
    nodes_[result.id].backward = [a](Tape& t, const Node& self) {
      const Tensor& Y = self.value;
      Tensor& gA = t.grad_slot(a.id);
      for (std::size_t r = 0; r < Y.rows(); ++r) {
        double gsum = 0.0;
        for (std::size_t c = 0; c < Y.cols(); ++c) gsum += self.grad(r, c);
        for (std::size_t c = 0; c < Y.cols(); ++c) {
          gA(r, c) += self.grad(r, c) - std::exp(Y(r, c)) * gsum;
        }
      }
    };
  }
  return result;
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  check_var(table);
  const Tensor& W = val(table.id);
  Tensor out(ids.size(), W.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= W.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table " +
                              shape_string(W));
    }
    const auto src = W.row_span(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(i * W.cols()));
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return push(std::move(out), {table}, [table, rows = std::move(rows)](Tape& t, const Node& self) {
    Tensor& gW = t.grad_slot(table.id);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < gW.cols(); ++c) {
        gW(static_cast<std::size_t>(rows[i]), c) += self.grad(i, c);
      }
    }
  });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  check_var(a);
  check_var(gain);
  check_var(bias);
  const Tensor& A = val(a.id);
  const Tensor& G = val(gain.id);
  const Tensor& Bv = val(bias.id);
  const std::size_t n = A.cols();
  if (G.rows() != 1 || G.cols() != n || !G.same_shape(Bv)) {
    throw ShapeError("layer_norm: input " + shape_string(A) + ", gain " + shape_string(G) +
                     ", bias " + shape_string(Bv));
  }
  Tensor normed(A.rows(), n);
  std::vector<double> inv_std(A.rows());
  Tensor out(A.rows(), n);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += A(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (A(r, c) - mean) * (A(r, c) - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      normed(r, c) = (A(r, c) - mean) * inv_std[r];
      out(r, c) = normed(r, c) * G[c] + Bv[c];
    }
  }
  return push(std::move(out), {a, gain, bias},
              [a, gain, bias, normed = std::move(normed), inv_std = std::move(inv_std), n](
                  Tape& t, const Node& self) {
                const Tensor& G = t.val(gain.id);
                const bool need_a = t.nodes_[a.id].requires_grad;
                const bool need_g = t.nodes_[gain.id].requires_grad;
                const bool need_b = t.nodes_[bias.id].requires_grad;
                for (std::size_t r = 0; r < normed.rows(); ++r) {
                  if (need_g) {
                    Tensor& gG = t.grad_slot(gain.id);
                    for (std::size_t c = 0; c < n; ++c) gG[c] += self.grad(r, c) * normed(r, c);
                  }
                  if (need_b) {
                    Tensor& gB = t.grad_slot(bias.id);
                    for (std::size_t c = 0; c < n; ++c) gB[c] += self.grad(r, c);
                  }
                  if (need_a) {
                    // dx = inv_std * (dn - mean(dn) - n_hat * mean(dn * n_hat))
                    double mean_dn = 0.0;
                    double mean_dn_n = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      const double dn = self.grad(r, c) * G[c];
                      mean_dn += dn;
                      mean_dn_n += dn * normed(r, c);
                    }
                    mean_dn /= static_cast<double>(n);
                    mean_dn_n /= static_cast<double>(n);
                    Tensor& gA = t.grad_slot(a.id);
                    for (std::size_t c = 0; c < n; ++c) {
                      const double dn = self.grad(r, c) * G[c];
                      gA(r, c) += inv_std[r] * (dn - mean_dn - normed(r, c) * mean_dn_n);
                    }
                  }
                }
              });
}

Var Tape::concat(Var a, Var b, Axis axis) {
  check_var(a);
  check_var(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  Tensor out;
  if (axis == Axis::Cols) {
    if (A.rows() != B.rows()) throw ShapeError("concat(cols): " + shape_string(A) + ", " + shape_string(B));
    out = Tensor(A.rows(), A.cols() + B.cols());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) = A(r, c);
      for (std::size_t c = 0; c < B.cols(); ++c) out(r, A.cols() + c) = B(r, c);
    }
  } else {
    if (A.cols() != B.cols()) throw ShapeError("concat(rows): " + shape_string(A) + ", " + shape_string(B));
    out = Tensor(A.rows() + B.rows(), A.cols());
    std::copy(A.values().begin(), A.values().end(), out.values().begin());
    std::copy(B.values().begin(), B.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(A.size()));
  }
  return push(std::move(out), {a, b}, [a, b, axis](Tape& t, const Node& self) {
    const std::size_t ar = t.val(a.id).rows();
    const std::size_t ac = t.val(a.id).cols();
    const bool need_a = t.nodes_[a.id].requires_grad;
    const bool need_b = t.nodes_[b.id].requires_grad;
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      for (std::size_t c = 0; c < self.grad.cols(); ++c) {
        const double g = self.grad(r, c);
        const bool in_a = axis == Axis::Cols ? c < ac : r < ar;
        if (in_a) {
          if (need_a) t.grad_slot(a.id)(r, c) += g;
        } else if (need_b) {
          if (axis == Axis::Cols) {
            t.grad_slot(b.id)(r, c - ac) += g;
          } else {
            t.grad_slot(b.id)(r - ar, c) += g;
          }
        }
      }
    }
  });
}

Var Tape::slice(Var a, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols) {
  check_var(a);
  const Tensor& A = val(a.id);
  if (row0 + rows > A.rows() || col0 + cols > A.cols()) {
    throw ShapeError("slice: rows [" + std::to_string(row0) + "," + std::to_string(row0 + rows) +
                     ") cols [" + std::to_string(col0) + "," + std::to_string(col0 + cols) +
                     ") outside " + shape_string(A));
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = A(row0 + r, col0 + c);
  }
  return push(std::move(out), {a}, [a, row0, col0](Tape& t, const Node& self) {
    Tensor& gA = t.grad_slot(a.id);
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      for (std::size_t c = 0; c < self.grad.cols(); ++c) gA(row0 + r, col0 + c) += self.grad(r, c);
    }
  });
}

Var Tape::sum(Var a) {
  check_var(a);
  double s = 0.0;
  for (double v : val(a.id).values()) s += v;
  return push(Tensor::scalar(s), {a}, [a](Tape& t, const Node& self) {
    Tensor& gA = t.grad_slot(a.id);
    const double g = self.grad[0];
    for (double& v : gA.values()) v += g;
  });
}

Var Tape::pick(Var a, std::span<const int> cols) {
  check_var(a);
  const Tensor& A = val(a.id);
  if (cols.size() != A.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + shape_string(A));
  }
  Tensor out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (cols[r] < 0 || static_cast<std::size_t>(cols[r]) >= A.cols()) {
      throw std::out_of_range("pick: column " + std::to_string(cols[r]) + " outside " + shape_string(A));
    }
    out(r, 0) = A(r, static_cast<std::size_t>(cols[r]));
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return push(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Node& self) {
    Tensor& gA = t.grad_slot(a.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      gA(r, static_cast<std::size_t>(idx[r])) += self.grad(r, 0);
    }
  });
}

Var Tape::straight_through_threshold(Var a) {
  check_var(a);
  Tensor out = val(a.id);
  for (double& v : out.values()) v = v > 0.0 ? 1.0 : 0.0;
  return push(std::move(out), {a}, [a](Tape& t, const Node& self) { t.grad_slot(a.id) += self.grad; });
}

// ---------------------------------------------------------------------------

GradientMap Tape::backward(Var loss) {
  check_var(loss);
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  if (val(loss.id).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(val(loss.id)));
  }
  consumed_ = true;
  GradientMap grads;
  if (nodes_[loss.id].requires_grad) grad_slot(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.param_name.empty()) continue;
    const Tensor& v = val(id);
    Tensor g = n.grad.size() ? n.grad : Tensor(v.rows(), v.cols());
    auto it = grads.find(n.param_name);
    if (it == grads.end()) {
      grads.emplace(n.param_name, std::move(g));
    } else {
      it->second += g;
    }
  }
  return grads;
}

}  // namespace scal::diff
