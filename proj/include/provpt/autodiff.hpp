#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "provpt/tensor.hpp"

namespace provpt {

// Handle into a Tape node.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a define-by-run tape. The tape is rebuilt every
// forward pass (the prompt distribution changes the graph topology between
// epochs), so nodes own their value/grad storage and creation order is the
// topological order used by backward().
//
// Primitive set: add, mul, matmul, transpose, reshape, concat/slice along one
// axis, softmax, layer-norm, GELU, tanh, mean, sum, cross-entropy-with-logits,
// plus the broadcast helpers add_rowvec / scale / expand_batch.
class Tape {
public:
    enum class Op : uint8_t {
        Leaf,
        Add,
        AddRowVec,
        Mul,
        Scale,
        Matmul,
        Bmm,
        Transpose,
        Reshape,
        Concat,
        Slice,
        ExpandBatch,
        Softmax,
        LayerNorm,
        Gelu,
        Tanh,
        Mean,
        Sum,
        CrossEntropy,
    };

    Var leaf(const Tensor& t);
    Var constant(std::vector<int64_t> shape, std::vector<double> values);
    Var scalar_const(double v);

    Var add(Var a, Var b);
    Var add_rowvec(Var x, Var bias);
    Var mul(Var a, Var b);
    Var scale(Var x, double c);
    // a: [..., m, k] (outer dims flattened into rows), b: [k, n]
    Var matmul(Var a, Var b);
    // a: [g, m, k], b: [g, k, n]
    Var bmm(Var a, Var b);
    Var transpose(Var x, int ax0, int ax1);
    Var reshape(Var x, std::vector<int64_t> shape);
    Var concat(const std::vector<Var>& xs, int axis);
    Var slice(Var x, int axis, int64_t start, int64_t len);
    // x: [dims...] -> [batch, dims...] (tiled; backward sums over the tile)
    Var expand_batch(Var x, int64_t batch);
    Var softmax(Var x);  // over the last axis
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
    Var gelu(Var x);
    Var tanh(Var x);
    Var mean(Var x);  // scalar
    Var sum(Var x);   // scalar
    // logits: [rows, classes]; mean NLL over rows.
    Var cross_entropy_logits(Var logits, const std::vector<int>& labels);

    // Value of a scalar node; throws on non-scalar roots.
    double forward_scalar(Var root) const;

    // Accumulates d(root)/d(leaf) into every requires-grad node reachable from
    // root. Calling it again without recording new nodes is a stale-tape error.
    void backward(Var root);

    const std::vector<double>& value(Var v) const { return node(v).val; }
    const std::vector<int64_t>& shape(Var v) const { return node(v).shape; }
    bool requires_grad(Var v) const { return node(v).rg; }
    // Gradient buffer (zeros if backward has not touched the node).
    const std::vector<double>& grad(Var v) const;
    Tensor grad_tensor(Var v) const;

    size_t num_nodes() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Op op;
        std::vector<int64_t> shape;
        std::vector<double> val;
        std::vector<double> grad;
        std::vector<int32_t> in;
        bool rg = false;
        double c = 0.0;           // Scale constant / LayerNorm eps
        int ax0 = 0;              // Transpose / Concat / Slice axis
        int ax1 = 0;
        int64_t start = 0;        // Slice
        std::vector<int> labels;  // CrossEntropy
        std::vector<double> saved;  // softmax output, LN mean/rstd, CE probs
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Node n);
    void ensure_grad(Node& n);
    void backward_node(int32_t id);

    static int norm_axis(int axis, int rank);

    std::vector<Node> nodes_;
    size_t nodes_at_backward_ = 0;
    bool backward_done_ = false;
};

const char* op_name(Tape::Op op);

}  // namespace provpt
