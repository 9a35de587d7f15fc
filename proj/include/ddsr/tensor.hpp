#pragma once

#include <cmath>
#include <memory>

#include "ddsr/common.hpp"

namespace ddsr {

// Reverse-mode autodiff over a dynamically built DAG. Nodes hold values and
// (lazily) gradients; op outputs keep shared ownership of their inputs, so a
// graph lives exactly as long as some output of it does. Leaves with
// requires_grad set are the trainable parameters.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    uint64_t seq = 0;  // creation order; parents always precede children
    std::string name;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward;

    bool has_grad() const { return !grad.empty(); }

    T* grad_buf() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

uint64_t next_node_seq();

// When false, ops skip graph construction entirely (inference mode).
bool grad_mode_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T v, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<T>>();
        n->value.assign(static_cast<size_t>(ddsr::numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        n->seq = next_node_seq();
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        DDSR_CHECK(static_cast<int64_t>(data.size()) == ddsr::numel(shape),
                   "tensor data size " << data.size() << " does not match shape "
                                       << shape_str(shape));
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        n->seq = next_node_seq();
        return Tensor(std::move(n));
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }

    std::vector<T>& data() { return n_->value; }
    const std::vector<T>& data() const { return n_->value; }
    T* ptr() { return n_->value.data(); }
    const T* ptr() const { return n_->value.data(); }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    bool has_grad() const { return n_->has_grad(); }
    const std::vector<T>& grad() const { return n_->grad; }
    std::vector<T>& grad_data() { return n_->grad; }
    void zero_grad() { n_->grad.clear(); }

    void set_name(const std::string& name) { n_->name = name; }
    const std::string& name() const { return n_->name; }

    T item() const {
        DDSR_CHECK(numel() == 1, "item() on tensor of " << numel() << " elements");
        return n_->value[0];
    }

    std::shared_ptr<TensorNode<T>>& node() { return n_; }
    const std::shared_ptr<TensorNode<T>>& node() const { return n_; }

    bool all_finite() const {
        for (T v : n_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // Reverse pass from this (scalar) tensor. Gradients accumulate into every
    // reachable node with requires_grad. Execution order is descending
    // creation order, which is a valid reverse topological order and is fully
    // deterministic.
    void backward();

private:
    std::shared_ptr<TensorNode<T>> n_;
};

// Builds an op output node. backward (may be empty) reads out.grad and
// accumulates into the parents' grad buffers.
template <typename T>
Tensor<T> make_op(Shape out_shape, std::vector<T> out_value,
                  std::vector<Tensor<T>> inputs,
                  std::function<void(TensorNode<T>&)> backward);

template <typename T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& contribution);

extern template struct TensorNode<float>;
extern template struct TensorNode<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ddsr
