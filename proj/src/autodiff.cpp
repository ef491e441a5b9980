#include "provpt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "provpt/kernels.hpp"

namespace provpt {

namespace {

// outer x axis x inner decomposition for axis-wise ops on row-major data.
struct AxisSplit {
    int64_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_at(const std::vector<int64_t>& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    s.axis = shape[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

const char* op_name(Tape::Op op) {
    switch (op) {
        case Tape::Op::Leaf: return "leaf";
        case Tape::Op::Add: return "add";
        case Tape::Op::AddRowVec: return "add_rowvec";
        case Tape::Op::Mul: return "mul";
        case Tape::Op::Scale: return "scale";
        case Tape::Op::Matmul: return "matmul";
        case Tape::Op::Bmm: return "bmm";
        case Tape::Op::Transpose: return "transpose";
        case Tape::Op::Reshape: return "reshape";
        case Tape::Op::Concat: return "concat";
        case Tape::Op::Slice: return "slice";
        case Tape::Op::ExpandBatch: return "expand_batch";
        case Tape::Op::Softmax: return "softmax";
        case Tape::Op::LayerNorm: return "layer_norm";
        case Tape::Op::Gelu: return "gelu";
        case Tape::Op::Tanh: return "tanh";
        case Tape::Op::Mean: return "mean";
        case Tape::Op::Sum: return "sum";
        case Tape::Op::CrossEntropy: return "cross_entropy";
    }
    return "?";
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
        throw std::invalid_argument("Tape: invalid Var handle");
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
        throw std::invalid_argument("Tape: invalid Var handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

int Tape::norm_axis(int axis, int rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::invalid_argument("Tape: axis out of range");
    return axis;
}

Var Tape::leaf(const Tensor& t) {
    Node n;
    n.op = Op::Leaf;
    n.shape = t.shape;
    n.val = t.values;
    n.rg = t.requires_grad;
    return push(std::move(n));
}

Var Tape::constant(std::vector<int64_t> shape, std::vector<double> values) {
    if (Tensor::numel_of(shape) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("Tape::constant: shape/value mismatch");
    Node n;
    n.op = Op::Leaf;
    n.shape = std::move(shape);
    n.val = std::move(values);
    n.rg = false;
    return push(std::move(n));
}

Var Tape::scalar_const(double v) { return constant({}, {v}); }

Var Tape::add(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape)
        throw std::invalid_argument("add: shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
    Node n;
    n.op = Op::Add;
    n.shape = na.shape;
    n.in = {a.id, b.id};
    n.rg = na.rg || nb.rg;
    n.val.resize(na.val.size());
    kern::add(na.val.data(), nb.val.data(), n.val.data(), static_cast<int64_t>(n.val.size()));
    return push(std::move(n));
}

Var Tape::add_rowvec(Var x, Var bias) {
    const Node& nx = node(x);
    const Node& nb = node(bias);
    if (nx.shape.empty() || nb.shape.size() != 1 || nb.shape[0] != nx.shape.back())
        throw std::invalid_argument("add_rowvec: bias must match last axis");
    Node n;
    n.op = Op::AddRowVec;
    n.shape = nx.shape;
    n.in = {x.id, bias.id};
    n.rg = nx.rg || nb.rg;
    n.val.resize(nx.val.size());
    const int64_t width = nx.shape.back();
    kern::add_rowvec(nx.val.data(), nb.val.data(), n.val.data(),
                     static_cast<int64_t>(nx.val.size()) / width, width);
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) throw std::invalid_argument("mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.shape = na.shape;
    n.in = {a.id, b.id};
    n.rg = na.rg || nb.rg;
    n.val.resize(na.val.size());
    kern::mul(na.val.data(), nb.val.data(), n.val.data(), static_cast<int64_t>(n.val.size()));
    return push(std::move(n));
}

Var Tape::scale(Var x, double c) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Scale;
    n.shape = nx.shape;
    n.in = {x.id};
    n.rg = nx.rg;
    n.c = c;
    n.val.resize(nx.val.size());
    kern::scale(nx.val.data(), c, n.val.data(), static_cast<int64_t>(n.val.size()));
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() < 2 || nb.shape.size() != 2)
        throw std::invalid_argument("matmul: need a rank>=2, b rank==2");
    const int64_t k = na.shape.back();
    if (k != nb.shape[0])
        throw std::invalid_argument("matmul: inner dims differ " + shape_str(na.shape) + " x " + shape_str(nb.shape));
    const int64_t m = static_cast<int64_t>(na.val.size()) / k;
    const int64_t nn = nb.shape[1];
    Node n;
    n.op = Op::Matmul;
    n.shape = na.shape;
    n.shape.back() = nn;
    n.in = {a.id, b.id};
    n.rg = na.rg || nb.rg;
    n.val.resize(static_cast<size_t>(m * nn));
    kern::matmul(na.val.data(), nb.val.data(), n.val.data(), m, k, nn);
    return push(std::move(n));
}

Var Tape::bmm(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 3 || nb.shape.size() != 3)
        throw std::invalid_argument("bmm: need rank-3 operands");
    if (na.shape[0] != nb.shape[0] || na.shape[2] != nb.shape[1])
        throw std::invalid_argument("bmm: shape mismatch " + shape_str(na.shape) + " x " + shape_str(nb.shape));
    const int64_t g = na.shape[0], m = na.shape[1], k = na.shape[2], nn = nb.shape[2];
    Node n;
    n.op = Op::Bmm;
    n.shape = {g, m, nn};
    n.in = {a.id, b.id};
    n.rg = na.rg || nb.rg;
    n.val.resize(static_cast<size_t>(g * m * nn));
    kern::bmm(na.val.data(), nb.val.data(), n.val.data(), g, m, k, nn);
    return push(std::move(n));
}

namespace {

// Swap two axes of a row-major tensor; works for any rank.
void transpose_copy(const std::vector<int64_t>& in_shape, const double* in, double* out, int ax0, int ax1) {
    const int rank = static_cast<int>(in_shape.size());
    std::vector<int64_t> out_shape = in_shape;
    std::swap(out_shape[static_cast<size_t>(ax0)], out_shape[static_cast<size_t>(ax1)]);
    std::vector<int64_t> in_strides(static_cast<size_t>(rank), 1);
    for (int i = rank - 2; i >= 0; --i)
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * in_shape[static_cast<size_t>(i + 1)];
    // stride of the output index along each output axis, mapped to input offsets
    std::vector<int64_t> map_strides(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) map_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i)];
    std::swap(map_strides[static_cast<size_t>(ax0)], map_strides[static_cast<size_t>(ax1)]);
    const int64_t total = Tensor::numel_of(in_shape);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t src = 0;
    for (int64_t o = 0; o < total; ++o) {
        out[o] = in[src];
        for (int i = rank - 1; i >= 0; --i) {
            idx[static_cast<size_t>(i)]++;
            src += map_strides[static_cast<size_t>(i)];
            if (idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            src -= map_strides[static_cast<size_t>(i)] * out_shape[static_cast<size_t>(i)];
            idx[static_cast<size_t>(i)] = 0;
        }
    }
}

void transpose_acc(const std::vector<int64_t>& in_shape, const double* in, double* out, int ax0, int ax1) {
    // out has in_shape with axes swapped; accumulate in[idx] into out[swapped idx]
    const int rank = static_cast<int>(in_shape.size());
    std::vector<int64_t> out_shape = in_shape;
    std::swap(out_shape[static_cast<size_t>(ax0)], out_shape[static_cast<size_t>(ax1)]);
    std::vector<int64_t> out_strides(static_cast<size_t>(rank), 1);
    for (int i = rank - 2; i >= 0; --i)
        out_strides[static_cast<size_t>(i)] = out_strides[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
    std::vector<int64_t> map_strides(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) map_strides[static_cast<size_t>(i)] = out_strides[static_cast<size_t>(i)];
    std::swap(map_strides[static_cast<size_t>(ax0)], map_strides[static_cast<size_t>(ax1)]);
    const int64_t total = Tensor::numel_of(in_shape);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t dst = 0;
    for (int64_t i = 0; i < total; ++i) {
        out[dst] += in[i];
        for (int a = rank - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)]++;
            dst += map_strides[static_cast<size_t>(a)];
            if (idx[static_cast<size_t>(a)] < in_shape[static_cast<size_t>(a)]) break;
            dst -= map_strides[static_cast<size_t>(a)] * in_shape[static_cast<size_t>(a)];
            idx[static_cast<size_t>(a)] = 0;
        }
    }
}

}  // namespace

Var Tape::transpose(Var x, int ax0, int ax1) {
    const Node& nx = node(x);
    const int rank = static_cast<int>(nx.shape.size());
    ax0 = norm_axis(ax0, rank);
    ax1 = norm_axis(ax1, rank);
    Node n;
    n.op = Op::Transpose;
    n.shape = nx.shape;
    std::swap(n.shape[static_cast<size_t>(ax0)], n.shape[static_cast<size_t>(ax1)]);
    n.in = {x.id};
    n.rg = nx.rg;
    n.ax0 = ax0;
    n.ax1 = ax1;
    n.val.resize(nx.val.size());
    transpose_copy(nx.shape, nx.val.data(), n.val.data(), ax0, ax1);
    return push(std::move(n));
}

Var Tape::reshape(Var x, std::vector<int64_t> shape) {
    const Node& nx = node(x);
    if (Tensor::numel_of(shape) != static_cast<int64_t>(nx.val.size()))
        throw std::invalid_argument("reshape: element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.shape = std::move(shape);
    n.in = {x.id};
    n.rg = nx.rg;
    n.val = nx.val;
    return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    if (xs.size() == 1) return xs[0];
    const Node& first = node(xs[0]);
    const int rank = static_cast<int>(first.shape.size());
    const int ax = norm_axis(axis, rank);
    std::vector<int64_t> out_shape = first.shape;
    bool rg = false;
    int64_t axis_total = 0;
    for (Var v : xs) {
        const Node& nv = node(v);
        if (static_cast<int>(nv.shape.size()) != rank) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != ax && nv.shape[static_cast<size_t>(i)] != first.shape[static_cast<size_t>(i)])
                throw std::invalid_argument("concat: non-axis dims differ");
        axis_total += nv.shape[static_cast<size_t>(ax)];
        rg = rg || nv.rg;
    }
    out_shape[static_cast<size_t>(ax)] = axis_total;
    Node n;
    n.op = Op::Concat;
    n.shape = out_shape;
    n.rg = rg;
    n.ax0 = ax;
    for (Var v : xs) n.in.push_back(v.id);
    n.val.resize(static_cast<size_t>(Tensor::numel_of(out_shape)));
    const AxisSplit s = split_at(out_shape, ax);
    int64_t offset = 0;
    for (Var v : xs) {
        const Node& nv = node(v);
        const int64_t len = nv.shape[static_cast<size_t>(ax)];
        for (int64_t o = 0; o < s.outer; ++o) {
            const double* src = nv.val.data() + o * len * s.inner;
            double* dst = n.val.data() + (o * s.axis + offset) * s.inner;
            std::copy(src, src + len * s.inner, dst);
        }
        offset += len;
    }
    return push(std::move(n));
}

Var Tape::slice(Var x, int axis, int64_t start, int64_t len) {
    const Node& nx = node(x);
    const int rank = static_cast<int>(nx.shape.size());
    const int ax = norm_axis(axis, rank);
    if (start < 0 || len < 0 || start + len > nx.shape[static_cast<size_t>(ax)])
        throw std::invalid_argument("slice: window out of range");
    Node n;
    n.op = Op::Slice;
    n.shape = nx.shape;
    n.shape[static_cast<size_t>(ax)] = len;
    n.in = {x.id};
    n.rg = nx.rg;
    n.ax0 = ax;
    n.start = start;
    n.val.resize(static_cast<size_t>(Tensor::numel_of(n.shape)));
    const AxisSplit s = split_at(nx.shape, ax);
    for (int64_t o = 0; o < s.outer; ++o) {
        const double* src = nx.val.data() + (o * s.axis + start) * s.inner;
        double* dst = n.val.data() + o * len * s.inner;
        std::copy(src, src + len * s.inner, dst);
    }
    return push(std::move(n));
}

Var Tape::expand_batch(Var x, int64_t batch) {
    const Node& nx = node(x);
    if (batch <= 0) throw std::invalid_argument("expand_batch: batch must be positive");
    Node n;
    n.op = Op::ExpandBatch;
    n.shape.reserve(nx.shape.size() + 1);
    n.shape.push_back(batch);
    n.shape.insert(n.shape.end(), nx.shape.begin(), nx.shape.end());
    n.in = {x.id};
    n.rg = nx.rg;
    n.val.resize(nx.val.size() * static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b)
        std::copy(nx.val.begin(), nx.val.end(), n.val.begin() + static_cast<int64_t>(nx.val.size()) * b);
    return push(std::move(n));
}

Var Tape::softmax(Var x) {
    const Node& nx = node(x);
    if (nx.shape.empty()) throw std::invalid_argument("softmax: rank-0 input");
    Node n;
    n.op = Op::Softmax;
    n.shape = nx.shape;
    n.in = {x.id};
    n.rg = nx.rg;
    n.val.resize(nx.val.size());
    const int64_t width = nx.shape.back();
    kern::softmax_rows(nx.val.data(), n.val.data(), static_cast<int64_t>(nx.val.size()) / width, width);
    return push(std::move(n));
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Node& nx = node(x);
    const Node& ng = node(gamma);
    const Node& nb = node(beta);
    if (nx.shape.empty()) throw std::invalid_argument("layer_norm: rank-0 input");
    const int64_t width = nx.shape.back();
    if (ng.shape != std::vector<int64_t>{width} || nb.shape != std::vector<int64_t>{width})
        throw std::invalid_argument("layer_norm: gamma/beta must be [width]");
    Node n;
    n.op = Op::LayerNorm;
    n.shape = nx.shape;
    n.in = {x.id, gamma.id, beta.id};
    n.rg = nx.rg || ng.rg || nb.rg;
    n.c = eps;
    n.val.resize(nx.val.size());
    const int64_t rows = static_cast<int64_t>(nx.val.size()) / width;
    n.saved.resize(static_cast<size_t>(2 * rows));
    kern::layernorm_rows(nx.val.data(), ng.val.data(), nb.val.data(), n.val.data(),
                         n.saved.data(), n.saved.data() + rows, rows, width, eps);
    return push(std::move(n));
}

Var Tape::gelu(Var x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Gelu;
    n.shape = nx.shape;
    n.in = {x.id};
    n.rg = nx.rg;
    n.val.resize(nx.val.size());
    kern::gelu(nx.val.data(), n.val.data(), static_cast<int64_t>(nx.val.size()));
    return push(std::move(n));
}

Var Tape::tanh(Var x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Tanh;
    n.shape = nx.shape;
    n.in = {x.id};
    n.rg = nx.rg;
    n.val.resize(nx.val.size());
    kern::tanh_ew(nx.val.data(), n.val.data(), static_cast<int64_t>(nx.val.size()));
    return push(std::move(n));
}

Var Tape::mean(Var x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Mean;
    n.shape = {};
    n.in = {x.id};
    n.rg = nx.rg;
    double s = 0.0;
    for (double v : nx.val) s += v;
    n.val = {s / static_cast<double>(nx.val.size())};
    return push(std::move(n));
}

Var Tape::sum(Var x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Sum;
    n.shape = {};
    n.in = {x.id};
    n.rg = nx.rg;
    double s = 0.0;
    for (double v : nx.val) s += v;
    n.val = {s};
    return push(std::move(n));
}

Var Tape::cross_entropy_logits(Var logits, const std::vector<int>& labels) {
    const Node& nl = node(logits);
    if (nl.shape.size() != 2) throw std::invalid_argument("cross_entropy: logits must be [rows, classes]");
    const int64_t rows = nl.shape[0];
    const int64_t classes = nl.shape[1];
    if (static_cast<int64_t>(labels.size()) != rows)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    for (int lab : labels)
        if (lab < 0 || lab >= classes) throw std::invalid_argument("cross_entropy: label out of range");
    Node n;
    n.op = Op::CrossEntropy;
    n.shape = {};
    n.in = {logits.id};
    n.rg = nl.rg;
    n.labels = labels;
    n.saved.resize(nl.val.size());
    kern::softmax_rows(nl.val.data(), n.saved.data(), rows, classes);
    double loss = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = nl.val.data() + r * classes;
        double mx = row[0];
        for (int64_t j = 1; j < classes; ++j) mx = row[j] > mx ? row[j] : mx;
        double lse = 0.0;
        for (int64_t j = 0; j < classes; ++j) lse += std::exp(row[j] - mx);
        lse = mx + std::log(lse);
        loss += lse - row[labels[static_cast<size_t>(r)]];
    }
    n.val = {loss / static_cast<double>(rows)};
    return push(std::move(n));
}

double Tape::forward_scalar(Var root) const {
    const Node& n = node(root);
    if (n.val.size() != 1)
        throw std::invalid_argument("forward_scalar: root is not scalar, shape " + shape_str(n.shape));
    return n.val[0];
}

void Tape::ensure_grad(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

const std::vector<double>& Tape::grad(Var v) const {
    const Node& n = node(v);
    static const std::vector<double> empty;
    if (n.grad.empty()) {
        // Never touched by backward: report zeros of the right size lazily.
        const_cast<Node&>(n).grad.assign(n.val.size(), 0.0);
    }
    return n.grad;
}

Tensor Tape::grad_tensor(Var v) const {
    const Node& n = node(v);
    Tensor t(n.shape);
    const std::vector<double>& g = grad(v);
    t.values = g;
    return t;
}

void Tape::backward(Var root) {
    if (backward_done_ && nodes_.size() == nodes_at_backward_)
        throw std::runtime_error("Tape::backward: stale tape, re-run the forward pass first");
    Node& rn = node(root);
    if (rn.val.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    ensure_grad(rn);
    rn.grad[0] += 1.0;
    for (int32_t id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.rg || n.grad.empty()) continue;
        backward_node(id);
    }
    backward_done_ = true;
    nodes_at_backward_ = nodes_.size();
}

void Tape::backward_node(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    auto in_node = [&](size_t i) -> Node& { return nodes_[static_cast<size_t>(n.in[i])]; };
    auto want = [&](size_t i) -> bool { return in_node(i).rg; };
    auto g_of = [&](size_t i) -> std::vector<double>& {
        Node& m = in_node(i);
        ensure_grad(m);
        return m.grad;
    };
    const int64_t total = static_cast<int64_t>(n.val.size());

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            if (want(0)) kern::axpy(1.0, n.grad.data(), g_of(0).data(), total);
            if (want(1)) kern::axpy(1.0, n.grad.data(), g_of(1).data(), total);
            break;
        }
        case Op::AddRowVec: {
            if (want(0)) kern::axpy(1.0, n.grad.data(), g_of(0).data(), total);
            if (want(1)) {
                std::vector<double>& gb = g_of(1);
                const int64_t width = n.shape.back();
                const int64_t rows = total / width;
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < width; ++j) gb[static_cast<size_t>(j)] += n.grad[static_cast<size_t>(r * width + j)];
            }
            break;
        }
        case Op::Mul: {
            const Node& a = in_node(0);
            const Node& b = in_node(1);
            if (want(0)) {
                std::vector<double>& ga = g_of(0);
                for (int64_t i = 0; i < total; ++i) ga[static_cast<size_t>(i)] += n.grad[static_cast<size_t>(i)] * b.val[static_cast<size_t>(i)];
            }
            if (want(1)) {
                std::vector<double>& gb = g_of(1);
                for (int64_t i = 0; i < total; ++i) gb[static_cast<size_t>(i)] += n.grad[static_cast<size_t>(i)] * a.val[static_cast<size_t>(i)];
            }
            break;
        }
        case Op::Scale: {
            if (want(0)) kern::axpy(n.c, n.grad.data(), g_of(0).data(), total);
            break;
        }
        case Op::Matmul: {
            const Node& a = in_node(0);
            const Node& b = in_node(1);
            const int64_t k = a.shape.back();
            const int64_t m = static_cast<int64_t>(a.val.size()) / k;
            const int64_t nn = b.shape[1];
            if (want(0)) {
                std::vector<double> da(static_cast<size_t>(m * k));
                kern::matmul_nt(n.grad.data(), b.val.data(), da.data(), m, nn, k);
                kern::axpy(1.0, da.data(), g_of(0).data(), m * k);
            }
            if (want(1)) kern::matmul_tn_acc(a.val.data(), n.grad.data(), g_of(1).data(), m, k, nn);
            break;
        }
        case Op::Bmm: {
            const Node& a = in_node(0);
            const Node& b = in_node(1);
            const int64_t g = a.shape[0], m = a.shape[1], k = a.shape[2], nn = b.shape[2];
            if (want(0)) {
                std::vector<double> da(a.val.size());
                kern::bmm_nt(n.grad.data(), b.val.data(), da.data(), g, m, nn, k);
                kern::axpy(1.0, da.data(), g_of(0).data(), static_cast<int64_t>(a.val.size()));
            }
            if (want(1)) kern::bmm_tn_acc(a.val.data(), n.grad.data(), g_of(1).data(), g, m, k, nn);
            break;
        }
        case Op::Transpose: {
            if (want(0)) transpose_acc(n.shape, n.grad.data(), g_of(0).data(), n.ax0, n.ax1);
            break;
        }
        case Op::Reshape: {
            if (want(0)) kern::axpy(1.0, n.grad.data(), g_of(0).data(), total);
            break;
        }
        case Op::Concat: {
            const AxisSplit s = split_at(n.shape, n.ax0);
            int64_t offset = 0;
            for (size_t i = 0; i < n.in.size(); ++i) {
                const Node& m = in_node(i);
                const int64_t len = m.shape[static_cast<size_t>(n.ax0)];
                if (want(i)) {
                    std::vector<double>& gi = g_of(i);
                    for (int64_t o = 0; o < s.outer; ++o) {
                        const double* src = n.grad.data() + (o * s.axis + offset) * s.inner;
                        double* dst = gi.data() + o * len * s.inner;
                        for (int64_t j = 0; j < len * s.inner; ++j) dst[j] += src[j];
                    }
                }
                offset += len;
            }
            break;
        }
        case Op::Slice: {
            if (want(0)) {
                const Node& m = in_node(0);
                const AxisSplit s = split_at(m.shape, n.ax0);
                const int64_t len = n.shape[static_cast<size_t>(n.ax0)];
                std::vector<double>& gx = g_of(0);
                for (int64_t o = 0; o < s.outer; ++o) {
                    const double* src = n.grad.data() + o * len * s.inner;
                    double* dst = gx.data() + (o * s.axis + n.start) * s.inner;
                    for (int64_t j = 0; j < len * s.inner; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::ExpandBatch: {
            if (want(0)) {
                std::vector<double>& gx = g_of(0);
                const int64_t inner = static_cast<int64_t>(gx.size());
                const int64_t batch = n.shape[0];
                for (int64_t b = 0; b < batch; ++b)
                    for (int64_t j = 0; j < inner; ++j) gx[static_cast<size_t>(j)] += n.grad[static_cast<size_t>(b * inner + j)];
            }
            break;
        }
        case Op::Softmax: {
            if (want(0)) {
                const int64_t width = n.shape.back();
                kern::softmax_rows_backward(n.val.data(), n.grad.data(), g_of(0).data(), total / width, width);
            }
            break;
        }
        case Op::LayerNorm: {
            const Node& x = in_node(0);
            const Node& gm = in_node(1);
            const int64_t width = n.shape.back();
            const int64_t rows = total / width;
            const double* mean = n.saved.data();
            const double* rstd = n.saved.data() + rows;
            std::vector<double> dummy_dx, dummy_dg, dummy_db;
            double* dx = nullptr;
            double* dg = nullptr;
            double* db = nullptr;
            if (want(0)) dx = g_of(0).data();
            else { dummy_dx.assign(x.val.size(), 0.0); dx = dummy_dx.data(); }
            if (want(1)) dg = g_of(1).data();
            else { dummy_dg.assign(static_cast<size_t>(width), 0.0); dg = dummy_dg.data(); }
            if (want(2)) db = g_of(2).data();
            else { dummy_db.assign(static_cast<size_t>(width), 0.0); db = dummy_db.data(); }
            kern::layernorm_rows_backward(x.val.data(), gm.val.data(), mean, rstd, n.grad.data(),
                                          dx, dg, db, rows, width);
            break;
        }
        case Op::Gelu: {
            if (want(0)) kern::gelu_backward(in_node(0).val.data(), n.grad.data(), g_of(0).data(), total);
            break;
        }
        case Op::Tanh: {
            if (want(0)) {
                std::vector<double>& gx = g_of(0);
                for (int64_t i = 0; i < total; ++i)
                    gx[static_cast<size_t>(i)] += n.grad[static_cast<size_t>(i)] * (1.0 - n.val[static_cast<size_t>(i)] * n.val[static_cast<size_t>(i)]);
            }
            break;
        }
        case Op::Mean: {
            if (want(0)) {
                std::vector<double>& gx = g_of(0);
                const double c = n.grad[0] / static_cast<double>(gx.size());
                for (double& g : gx) g += c;
            }
            break;
        }
        case Op::Sum: {
            if (want(0)) {
                std::vector<double>& gx = g_of(0);
                const double c = n.grad[0];
                for (double& g : gx) g += c;
            }
            break;
        }
        case Op::CrossEntropy: {
            if (want(0)) {
                const Node& l = in_node(0);
                const int64_t rows = l.shape[0];
                const int64_t classes = l.shape[1];
                std::vector<double>& gl = g_of(0);
                const double c = n.grad[0] / static_cast<double>(rows);
                for (int64_t r = 0; r < rows; ++r) {
                    const double* p = n.saved.data() + r * classes;
                    double* g = gl.data() + r * classes;
                    for (int64_t j = 0; j < classes; ++j) g[j] += c * p[j];
                    g[n.labels[static_cast<size_t>(r)]] -= c;
                }
            }
            break;
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    nodes_at_backward_ = 0;
    backward_done_ = false;
}

}  // namespace provpt
