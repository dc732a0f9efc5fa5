#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scal/diffcore/tensor.hpp"

namespace scal::diff {

/// Named, ordered parameter storage. One set per model component
/// (the encoder and every decoder own disjoint sets).
class ParameterSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.contains(name); }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  /// A frozen set binds to tapes as constants and receives no gradient.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  /// FNV-1a over names and raw value bytes; used for freeze and
  /// reproducibility assertions.
  std::uint64_t hash() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
  bool frozen_ = false;
};

using GradientMap = std::map<std::string, Tensor>;

GradientMap zero_gradients(const ParameterSet& params);
void accumulate(GradientMap& into, const GradientMap& from, double weight = 1.0);
void scale(GradientMap& grads, double s);

struct Var {
  std::size_t id = 0;
};

enum class Axis { Rows, Cols };

/// Records primitive operations for reverse-mode differentiation.
///
/// Values of every node are kept; backward closures are kept only when
/// recording is on and at least one input needs a gradient. Parameters
/// are bound by reference, so the ParameterSet must outlive the tape and
/// must not be modified while the tape is alive.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Tensor value);
  /// Binds a stored tensor without copying it.
  Var constant_ref(const Tensor& value);
  Var parameter(const ParameterSet& params, const std::string& name);

  Var matmul(Var a, Var b, bool transpose_b = false);
  /// Same-shape addition, or a 1xC row broadcast over the rows of `a`.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var mul(Var a, Var b);
  Var relu(Var a);
  /// Row-wise softmax. With `causal_offset`, row i only sees columns
  /// j <= i + offset; masked entries are exactly zero.
  Var softmax(Var a, std::optional<std::size_t> causal_offset = std::nullopt);
  Var log_softmax(Var a);
  Var embedding(Var table, std::span<const int> ids);
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
  Var concat(Var a, Var b, Axis axis = Axis::Cols);
  Var slice(Var a, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols);
  Var sum(Var a);
  /// Selects a(i, cols[i]) per row, giving a rows x 1 column.
  Var pick(Var a, std::span<const int> cols);
  /// Forward: 1 where a > 0 else 0. Backward: identity (straight-through).
  Var straight_through_threshold(Var a);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of a scalar loss w.r.t. every trainable parameter bound on
  /// this tape (zero tensors for parameters the loss does not reach).
  /// The tape is consumed; a second call throws.
  GradientMap backward(Var loss);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::string param_name;
    std::function<void(Tape&, const Node&)> backward;
    std::vector<std::size_t> parents;
  };

  const Tensor& val(std::size_t id) const;
  Tensor& grad_slot(std::size_t id);
  bool any_requires(std::initializer_list<Var> vs) const;
  Var push(Tensor value, std::initializer_list<Var> parents,
           std::function<void(Tape&, const Node&)> backward);
  void check_var(Var v) const;

  std::vector<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

}  // namespace scal::diff
