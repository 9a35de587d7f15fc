#include "ddsr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace ddsr {

namespace {
std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_mode = true;
}  // namespace

uint64_t next_node_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev; }

template <typename T>
void Tensor<T>::backward() {
    DDSR_CHECK(defined(), "backward() on undefined tensor");
    DDSR_CHECK(numel() == 1, "backward() expects a scalar loss, got "
                                 << shape_str(shape()));

    // Collect the reachable graph.
    std::vector<TensorNode<T>*> nodes;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<TensorNode<T>*> stack{n_.get()};
    seen.insert(n_.get());
    while (!stack.empty()) {
        TensorNode<T>* cur = stack.back();
        stack.pop_back();
        nodes.push_back(cur);
        for (auto& p : cur->parents) {
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const TensorNode<T>* a, const TensorNode<T>* b) { return a->seq > b->seq; });

    n_->grad.assign(1, T(1));
    for (TensorNode<T>* node : nodes) {
        if (node->backward && node->has_grad()) node->backward(*node);
    }
}

template <typename T>
Tensor<T> make_op(Shape out_shape, std::vector<T> out_value,
                  std::vector<Tensor<T>> inputs,
                  std::function<void(TensorNode<T>&)> backward) {
    DDSR_CHECK(static_cast<int64_t>(out_value.size()) == numel(out_shape),
               "op output size mismatch for shape " << shape_str(out_shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(out_shape);
    n->value = std::move(out_value);
    n->seq = next_node_seq();
    if (grad_mode_enabled()) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || in.requires_grad();
        if (needs) {
            n->requires_grad = true;
            n->parents.reserve(inputs.size());
            for (auto& in : inputs) n->parents.push_back(in.node());
            n->backward = std::move(backward);
        }
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& contribution) {
    DDSR_CHECK(contribution.size() == dst.value.size(),
               "gradient size mismatch for " << shape_str(dst.shape));
    T* g = dst.grad_buf();
    const T* c = contribution.data();
    int64_t n = static_cast<int64_t>(contribution.size());
    for (int64_t i = 0; i < n; ++i) g[i] += c[i];
}

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_op<float>(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                      std::function<void(TensorNode<float>&)>);
template Tensor<double> make_op<double>(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                        std::function<void(TensorNode<double>&)>);
template void accumulate<float>(TensorNode<float>&, const std::vector<float>&);
template void accumulate<double>(TensorNode<double>&, const std::vector<double>&);

}  // namespace ddsr
