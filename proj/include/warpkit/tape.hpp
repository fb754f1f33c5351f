#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "warpkit/tensor.hpp"

namespace warpkit {

// Reverse-mode tape. Nodes are appended in topological order by
// construction; backward() visits them exactly once in reverse.
// A tape is single-threaded; rebuild one per forward pass.
template <class T>
class Tape {
  public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Tensor<T> value, bool trainable = false) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, nullptr, trainable});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    // Records an op result. `pull` adds the node's adjoint contribution
    // into its operands' grads; it may read any node by id via the tape.
    Var record(Tensor<T> value, std::function<void(Tape&)> pull) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, std::move(pull), false});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& val(Var v) const { return nodes_.at(v.id).value; }

    Tensor<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.dims);
        return n.grad;
    }

    bool is_trainable(Var v) const { return nodes_.at(v.id).trainable; }
    int size() const { return static_cast<int>(nodes_.size()); }

    void backward(Var loss) {
        require(val(loss).size() == 1, "backward: loss must be a scalar, got dims " +
                                           dims_str(val(loss).dims));
        grad(loss)[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<Index>(i)];
            if (n.pull && !n.grad.data.empty()) n.pull(*this);
        }
    }

    // True once backward reached this node (grad buffer allocated).
    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.data.empty(); }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void(Tape&)> pull;
        bool trainable;
    };
    std::vector<Node> nodes_;
};

}  // namespace warpkit
