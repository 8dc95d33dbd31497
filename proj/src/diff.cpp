#include "bimpm/diff.hpp"

#include <algorithm>
#include <cmath>

namespace bimpm
{

std::string_view op_name(Op op)
{
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::AddRowwise: return "add_rowwise";
    case Op::CwiseMul: return "cmul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Softmax: return "softmax";
    case Op::ConcatCols: return "concat_cols";
    case Op::ConcatRows: return "concat_rows";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::GatherRows: return "gather_rows";
    case Op::MaxReduce: return "max_reduce";
    case Op::SegmentMax: return "segment_max";
    case Op::RowNorm: return "row_norm";
    case Op::CosineRows: return "cosine_rows";
    case Op::CosineMatrix: return "cosine_matrix";
    case Op::MpCosineRows: return "mp_cosine_rows";
    case Op::DivRows: return "div_rows";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::DropoutMask: return "dropout_mask";
    case Op::NegLogPick: return "neg_log_pick";
    }
    return "unknown";
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols)
{
    return std::to_string(rows) + "x" + std::to_string(cols);
}

namespace
{

template <typename Scalar>
[[noreturn]] void shape_mismatch(Op op, const Matrix<Scalar>& a, const Matrix<Scalar>& b)
{
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(a.rows(), a.cols()) + " vs " +
                     shape_string(b.rows(), b.cols()));
}

template <typename Scalar>
void require_same_shape(Op op, const Matrix<Scalar>& a, const Matrix<Scalar>& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        shape_mismatch(op, a, b);
}

template <typename Scalar>
void require_same_graph(Op op, Var<Scalar> a, Var<Scalar> b)
{
    if (&a.graph() != &b.graph())
        throw ShapeError(std::string(op_name(op)) + ": operands belong to different graphs");
}

// Shared cosine kernel. Row t of a and b are compared under squared weights w2 (l x n);
// plain cosine is the special case w2 = ones(1, n).
template <typename Scalar>
struct CosineParts
{
    Matrix<Scalar> num, na, nb, den;
};

template <typename Scalar>
CosineParts<Scalar> cosine_parts(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const Matrix<Scalar>& w2)
{
    CosineParts<Scalar> c;
    c.num = (a.array() * b.array()).matrix() * w2.transpose();
    c.na = a.array().square().matrix() * w2.transpose();
    c.nb = b.array().square().matrix() * w2.transpose();
    c.den = (c.na.array() * c.nb.array()).sqrt().max(Scalar(kCosineFloor)).matrix();
    return c;
}

} // namespace

// ---------------------------------------------------------------------------
// ParamStore

template <typename Scalar>
Parameter<Scalar>& ParamStore<Scalar>::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                           bool trainable)
{
    if (index_.count(name))
        throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<Scalar>>();
    p->name = name;
    p->value = Matrix<Scalar>::Zero(rows, cols);
    if (trainable)
        p->grad = Matrix<Scalar>::Zero(rows, cols);
    p->trainable = trainable;
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

template <typename Scalar>
Parameter<Scalar>& ParamStore<Scalar>::at(const std::string& name)
{
    auto* p = find(name);
    if (!p)
        throw ConfigError("unknown parameter: " + name);
    return *p;
}

template <typename Scalar>
const Parameter<Scalar>& ParamStore<Scalar>::at(const std::string& name) const
{
    return const_cast<ParamStore*>(this)->at(name);
}

template <typename Scalar>
Parameter<Scalar>* ParamStore<Scalar>::find(const std::string& name)
{
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename Scalar>
void ParamStore<Scalar>::zero_grad()
{
    for (auto& p : params_)
        if (p->trainable)
            p->grad.setZero();
}

template <typename Scalar>
Eigen::Index ParamStore<Scalar>::entry_count() const
{
    Eigen::Index n = 0;
    for (const auto& p : params_)
        n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Var / Graph

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::value() const
{
    return graph_->value(id_);
}

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::grad() const
{
    return graph_->grad_target(id_);
}

template <typename Scalar>
const Matrix<Scalar>& Graph<Scalar>::value(int id) const
{
    const auto& n = node(id);
    return n.param ? n.param->value : n.value;
}

template <typename Scalar>
Matrix<Scalar>& Graph<Scalar>::grad_target(int id)
{
    auto& n = node(id);
    return n.param ? n.param->grad : n.grad;
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Matrix<Scalar> value)
{
    return record(Op::Leaf, std::move(value), {});
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::param(Parameter<Scalar>& p)
{
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end())
        return Var<Scalar>(this, it->second);
    Node<Scalar> n;
    n.op = Op::Param;
    n.param = &p;
    n.requires_grad = p.trainable;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return Var<Scalar>(this, id);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(Op op, Matrix<Scalar> value, std::vector<int> parents)
{
    Node<Scalar> n;
    n.op = op;
    n.value = std::move(value);
    for (int p : parents)
        n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Scalar>
void Graph<Scalar>::accumulate(int id, const Matrix<Scalar>& delta)
{
    if (!node(id).requires_grad)
        return;
    grad_target(id) += delta;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss)
{
    if (&loss.graph() != this)
        throw ShapeError("backward: loss belongs to a different graph");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.rows(), loss.cols()));
    for (auto& n : nodes_)
        if (n.requires_grad && !n.param)
            n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
    if (!node(loss.id()).requires_grad)
        return;
    grad_target(loss.id()).array() += Scalar(1);
    for (int id = loss.id(); id >= 0; --id) {
        if (node(id).requires_grad && !node(id).param)
            backprop_node(id);
    }
}

template <typename Scalar>
void Graph<Scalar>::backprop_node(int id)
{
    // accumulate() writes other nodes' grads but never resizes the tape, so these references stay valid.
    const Node<Scalar>& n = node(id);
    const Matrix<Scalar>& g = n.grad;
    const auto& par = n.parents;
    auto val = [&](std::size_t k) -> const Matrix<Scalar>& { return value(par[k]); };
    auto needs = [&](std::size_t k) { return node(par[k]).requires_grad; };

    switch (n.op) {
    case Op::Leaf:
    case Op::Param:
        break;
    case Op::MatMul:
        if (needs(0))
            accumulate(par[0], g * val(1).transpose());
        if (needs(1))
            accumulate(par[1], val(0).transpose() * g);
        break;
    case Op::Add:
        accumulate(par[0], g);
        accumulate(par[1], g);
        break;
    case Op::Sub:
        accumulate(par[0], g);
        accumulate(par[1], -g);
        break;
    case Op::AddRowwise:
        accumulate(par[0], g);
        if (needs(1))
            accumulate(par[1], g.colwise().sum());
        break;
    case Op::CwiseMul:
        if (needs(0))
            accumulate(par[0], (g.array() * val(1).array()).matrix());
        if (needs(1))
            accumulate(par[1], (g.array() * val(0).array()).matrix());
        break;
    case Op::Scale:
        accumulate(par[0], g * n.scalar);
        break;
    case Op::AddScalar:
        accumulate(par[0], g);
        break;
    case Op::Tanh:
        accumulate(par[0], (g.array() * (Scalar(1) - n.value.array().square())).matrix());
        break;
    case Op::Sigmoid:
        accumulate(par[0], (g.array() * n.value.array() * (Scalar(1) - n.value.array())).matrix());
        break;
    case Op::Relu:
        accumulate(par[0], (g.array() * (val(0).array() > Scalar(0)).template cast<Scalar>()).matrix());
        break;
    case Op::Softmax: {
        Matrix<Scalar> d(n.value.rows(), n.value.cols());
        for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
            const Scalar dot = g.row(r).dot(n.value.row(r));
            d.row(r) = (n.value.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
        accumulate(par[0], d);
        break;
    }
    case Op::ConcatCols: {
        Eigen::Index off = 0;
        for (std::size_t k = 0; k < par.size(); ++k) {
            const Eigen::Index w = val(k).cols();
            if (needs(k))
                accumulate(par[k], g.middleCols(off, w));
            off += w;
        }
        break;
    }
    case Op::ConcatRows: {
        Eigen::Index off = 0;
        for (std::size_t k = 0; k < par.size(); ++k) {
            const Eigen::Index h = val(k).rows();
            if (needs(k))
                accumulate(par[k], g.middleRows(off, h));
            off += h;
        }
        break;
    }
    case Op::SliceRows:
        if (needs(0))
            grad_target(par[0]).middleRows(n.index[0], n.index[1]) += g;
        break;
    case Op::SliceCols:
        if (needs(0))
            grad_target(par[0]).middleCols(n.index[0], n.index[1]) += g;
        break;
    case Op::GatherRows:
        if (needs(0)) {
            auto& target = grad_target(par[0]);
            for (std::size_t r = 0; r < n.index.size(); ++r)
                target.row(n.index[r]) += g.row(static_cast<Eigen::Index>(r));
        }
        break;
    case Op::MaxReduce: {
        const Eigen::Index cols = n.value.cols();
        for (Eigen::Index r = 0; r < n.value.rows(); ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                const int p = par[static_cast<std::size_t>(n.index[static_cast<std::size_t>(r * cols + c)])];
                if (node(p).requires_grad)
                    grad_target(p)(r, c) += g(r, c);
            }
        break;
    }
    case Op::SegmentMax: {
        if (!needs(0))
            break;
        auto& target = grad_target(par[0]);
        const Eigen::Index cols = n.value.cols();
        for (Eigen::Index r = 0; r < n.value.rows(); ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                target(n.index[static_cast<std::size_t>(r * cols + c)], c) += g(r, c);
        break;
    }
    case Op::RowNorm: {
        const Matrix<Scalar>& a = val(0);
        Matrix<Scalar> d = Matrix<Scalar>::Zero(a.rows(), a.cols());
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            if (n.value(r, 0) > Scalar(0))
                d.row(r) = a.row(r) * (g(r, 0) / n.value(r, 0));
        accumulate(par[0], d);
        break;
    }
    case Op::CosineRows:
    case Op::MpCosineRows: {
        const Matrix<Scalar>& a = val(0);
        const Matrix<Scalar>& b = val(1);
        const bool weighted = n.op == Op::MpCosineRows;
        const Matrix<Scalar> w2 =
            weighted ? Matrix<Scalar>(val(2).array().square()) : Matrix<Scalar>::Ones(1, a.cols());
        const auto c = cosine_parts(a, b, w2);
        const Matrix<Scalar> dnum = (g.array() / c.den.array()).matrix();
        const Matrix<Scalar> dden = (-g.array() * n.value.array() / c.den.array()).matrix();
        const auto active = ((c.na.array() * c.nb.array()).sqrt() > Scalar(kCosineFloor)).template cast<Scalar>();
        const Matrix<Scalar> dna = (active * dden.array() * c.nb.array() / (Scalar(2) * c.den.array())).matrix();
        const Matrix<Scalar> dnb = (active * dden.array() * c.na.array() / (Scalar(2) * c.den.array())).matrix();
        const Matrix<Scalar> dnum_w = dnum * w2;
        if (needs(0))
            accumulate(par[0], (dnum_w.array() * b.array() + Scalar(2) * (dna * w2).array() * a.array()).matrix());
        if (needs(1))
            accumulate(par[1], (dnum_w.array() * a.array() + Scalar(2) * (dnb * w2).array() * b.array()).matrix());
        if (weighted && needs(2)) {
            const Matrix<Scalar> dw2 = dnum.transpose() * (a.array() * b.array()).matrix() +
                                       dna.transpose() * a.array().square().matrix() +
                                       dnb.transpose() * b.array().square().matrix();
            accumulate(par[2], (Scalar(2) * val(2).array() * dw2.array()).matrix());
        }
        break;
    }
    case Op::CosineMatrix: {
        const Matrix<Scalar>& a = val(0);
        const Matrix<Scalar>& b = val(1);
        const Matrix<Scalar> na = a.rowwise().squaredNorm();
        const Matrix<Scalar> nb = b.rowwise().squaredNorm();
        const Matrix<Scalar> prod = na * nb.transpose();
        const Matrix<Scalar> den = prod.array().sqrt().max(Scalar(kCosineFloor)).matrix();
        const auto active = (prod.array().sqrt() > Scalar(kCosineFloor)).template cast<Scalar>();
        const Matrix<Scalar> dnum = (g.array() / den.array()).matrix();
        const Matrix<Scalar> dden = (active * -g.array() * n.value.array() / den.array()).matrix();
        // d den_ij / d na_i = nb_j / (2 den_ij)
        const Matrix<Scalar> dna = (dden.array() / (Scalar(2) * den.array())).matrix() * nb;
        const Matrix<Scalar> dnb = (dden.array() / (Scalar(2) * den.array())).matrix().transpose() * na;
        if (needs(0))
            accumulate(par[0], dnum * b + Scalar(2) * (a.array().colwise() * dna.col(0).array()).matrix());
        if (needs(1))
            accumulate(par[1], dnum.transpose() * a + Scalar(2) * (b.array().colwise() * dnb.col(0).array()).matrix());
        break;
    }
    case Op::DivRows: {
        const Matrix<Scalar>& s = val(1);
        if (needs(0))
            accumulate(par[0], (g.array().colwise() / s.col(0).array()).matrix());
        if (needs(1)) {
            const Matrix<Scalar> gy = (g.array() * n.value.array()).rowwise().sum().matrix();
            accumulate(par[1], (-gy.array() / s.array()).matrix());
        }
        break;
    }
    case Op::Sum:
        accumulate(par[0], Matrix<Scalar>::Constant(val(0).rows(), val(0).cols(), g(0, 0)));
        break;
    case Op::RowSum:
        accumulate(par[0], g.col(0).replicate(1, val(0).cols()));
        break;
    case Op::DropoutMask:
        accumulate(par[0], (g.array() * n.aux.array()).matrix());
        break;
    case Op::NegLogPick: {
        const Eigen::Index k = n.index[0];
        const Scalar p = val(0)(0, k);
        if (p > Scalar(kProbabilityFloor)) {
            Matrix<Scalar> d = Matrix<Scalar>::Zero(1, val(0).cols());
            d(0, k) = -g(0, 0) / p;
            accumulate(par[0], d);
        }
        break;
    }
    }
}

// ---------------------------------------------------------------------------
// Ops

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::MatMul, a, b);
    if (a.cols() != b.rows())
        shape_mismatch(Op::MatMul, a.value(), b.value());
    return a.graph().record(Op::MatMul, a.value() * b.value(), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::Add, a, b);
    require_same_shape(Op::Add, a.value(), b.value());
    return a.graph().record(Op::Add, a.value() + b.value(), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::Sub, a, b);
    require_same_shape(Op::Sub, a.value(), b.value());
    return a.graph().record(Op::Sub, a.value() - b.value(), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> add_rowwise(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::AddRowwise, a, b);
    if (b.rows() != 1 || b.cols() != a.cols())
        shape_mismatch(Op::AddRowwise, a.value(), b.value());
    Matrix<Scalar> v = a.value().rowwise() + b.value().row(0);
    return a.graph().record(Op::AddRowwise, std::move(v), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> cmul(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::CwiseMul, a, b);
    require_same_shape(Op::CwiseMul, a.value(), b.value());
    return a.graph().record(Op::CwiseMul, a.value().cwiseProduct(b.value()), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s)
{
    auto out = a.graph().record(Op::Scale, a.value() * s, {a.id()});
    out.graph().node(out.id()).scalar = s;
    return out;
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> a, Scalar s)
{
    Matrix<Scalar> v = a.value().array() + s;
    auto out = a.graph().record(Op::AddScalar, std::move(v), {a.id()});
    out.graph().node(out.id()).scalar = s;
    return out;
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a)
{
    return a.graph().record(Op::Tanh, a.value().array().tanh().matrix(), {a.id()});
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a)
{
    Matrix<Scalar> v = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
    return a.graph().record(Op::Sigmoid, std::move(v), {a.id()});
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a)
{
    return a.graph().record(Op::Relu, a.value().cwiseMax(Scalar(0)), {a.id()});
}

template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> a)
{
    Matrix<Scalar> v(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const Scalar m = a.value().row(r).maxCoeff();
        v.row(r) = (a.value().row(r).array() - m).exp().matrix();
        v.row(r) /= v.row(r).sum();
    }
    return a.graph().record(Op::Softmax, std::move(v), {a.id()});
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts)
{
    if (parts.empty())
        throw ShapeError("concat_cols: no operands");
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        require_same_graph(Op::ConcatCols, parts[0], p);
        if (p.rows() != parts[0].rows())
            shape_mismatch(Op::ConcatCols, parts[0].value(), p.value());
        cols += p.cols();
    }
    Matrix<Scalar> v(parts[0].rows(), cols);
    std::vector<int> ids;
    ids.reserve(parts.size());
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
        ids.push_back(p.id());
    }
    return parts[0].graph().record(Op::ConcatCols, std::move(v), std::move(ids));
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts)
{
    if (parts.empty())
        throw ShapeError("concat_rows: no operands");
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        require_same_graph(Op::ConcatRows, parts[0], p);
        if (p.cols() != parts[0].cols())
            shape_mismatch(Op::ConcatRows, parts[0].value(), p.value());
        rows += p.rows();
    }
    Matrix<Scalar> v(rows, parts[0].cols());
    std::vector<int> ids;
    ids.reserve(parts.size());
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleRows(off, p.rows()) = p.value();
        off += p.rows();
        ids.push_back(p.id());
    }
    return parts[0].graph().record(Op::ConcatRows, std::move(v), std::move(ids));
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count)
{
    if (start < 0 || count < 1 || start + count > a.rows())
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(a.rows(), a.cols()));
    auto out = a.graph().record(Op::SliceRows, a.value().middleRows(start, count), {a.id()});
    out.graph().node(out.id()).index = {start, count};
    return out;
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count)
{
    if (start < 0 || count < 1 || start + count > a.cols())
        throw ShapeError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(a.rows(), a.cols()));
    auto out = a.graph().record(Op::SliceCols, a.value().middleCols(start, count), {a.id()});
    out.graph().node(out.id()).index = {start, count};
    return out;
}

template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Eigen::Index> indices)
{
    if (indices.empty())
        throw ShapeError("gather_rows: empty index list");
    Matrix<Scalar> v(static_cast<Eigen::Index>(indices.size()), a.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] < 0 || indices[r] >= a.rows())
            throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                             shape_string(a.rows(), a.cols()));
        v.row(static_cast<Eigen::Index>(r)) = a.value().row(indices[r]);
    }
    auto out = a.graph().record(Op::GatherRows, std::move(v), {a.id()});
    out.graph().node(out.id()).index = std::move(indices);
    return out;
}

template <typename Scalar>
Var<Scalar> max_reduce(std::span<const Var<Scalar>> parts)
{
    if (parts.empty())
        throw ShapeError("max_reduce: no operands");
    Matrix<Scalar> v = parts[0].value();
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.size()), 0);
    std::vector<int> ids{parts[0].id()};
    for (std::size_t k = 1; k < parts.size(); ++k) {
        require_same_graph(Op::MaxReduce, parts[0], parts[k]);
        require_same_shape(Op::MaxReduce, parts[0].value(), parts[k].value());
        const auto& x = parts[k].value();
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
                if (x(r, c) > v(r, c)) {
                    v(r, c) = x(r, c);
                    arg[static_cast<std::size_t>(r * v.cols() + c)] = static_cast<Eigen::Index>(k);
                }
        ids.push_back(parts[k].id());
    }
    auto out = parts[0].graph().record(Op::MaxReduce, std::move(v), std::move(ids));
    out.graph().node(out.id()).index = std::move(arg);
    return out;
}

template <typename Scalar>
Var<Scalar> segment_max(Var<Scalar> a, Eigen::Index group)
{
    if (group < 1 || a.rows() % group != 0)
        throw ShapeError("segment_max: group size " + std::to_string(group) + " does not divide " +
                         shape_string(a.rows(), a.cols()));
    const Eigen::Index groups = a.rows() / group;
    const auto& x = a.value();
    Matrix<Scalar> v(groups, a.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.size()));
    for (Eigen::Index s = 0; s < groups; ++s)
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            Eigen::Index best = s * group;
            for (Eigen::Index r = best + 1; r < (s + 1) * group; ++r)
                if (x(r, c) > x(best, c))
                    best = r;
            v(s, c) = x(best, c);
            arg[static_cast<std::size_t>(s * a.cols() + c)] = best;
        }
    auto out = a.graph().record(Op::SegmentMax, std::move(v), {a.id()});
    out.graph().node(out.id()).index = std::move(arg);
    return out;
}

template <typename Scalar>
Var<Scalar> row_norm(Var<Scalar> a)
{
    return a.graph().record(Op::RowNorm, a.value().rowwise().norm(), {a.id()});
}

template <typename Scalar>
Var<Scalar> cosine_rows(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::CosineRows, a, b);
    require_same_shape(Op::CosineRows, a.value(), b.value());
    const auto c = cosine_parts(a.value(), b.value(), Matrix<Scalar>::Ones(1, a.cols()).eval());
    return a.graph().record(Op::CosineRows, (c.num.array() / c.den.array()).matrix(), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> cosine_matrix(Var<Scalar> a, Var<Scalar> b)
{
    require_same_graph(Op::CosineMatrix, a, b);
    if (a.cols() != b.cols())
        shape_mismatch(Op::CosineMatrix, a.value(), b.value());
    const Matrix<Scalar> num = a.value() * b.value().transpose();
    const Matrix<Scalar> prod = a.value().rowwise().squaredNorm() * b.value().rowwise().squaredNorm().transpose();
    Matrix<Scalar> v = (num.array() / prod.array().sqrt().max(Scalar(kCosineFloor))).matrix();
    return a.graph().record(Op::CosineMatrix, std::move(v), {a.id(), b.id()});
}

template <typename Scalar>
Var<Scalar> mp_cosine_rows(Var<Scalar> a, Var<Scalar> b, Var<Scalar> w)
{
    require_same_graph(Op::MpCosineRows, a, b);
    require_same_graph(Op::MpCosineRows, a, w);
    require_same_shape(Op::MpCosineRows, a.value(), b.value());
    if (w.rows() < 1 || w.cols() != a.cols())
        shape_mismatch(Op::MpCosineRows, a.value(), w.value());
    const auto c = cosine_parts(a.value(), b.value(), Matrix<Scalar>(w.value().array().square()));
    return a.graph().record(Op::MpCosineRows, (c.num.array() / c.den.array()).matrix(), {a.id(), b.id(), w.id()});
}

template <typename Scalar>
Var<Scalar> div_rows(Var<Scalar> a, Var<Scalar> s)
{
    require_same_graph(Op::DivRows, a, s);
    if (s.cols() != 1 || s.rows() != a.rows())
        shape_mismatch(Op::DivRows, a.value(), s.value());
    Matrix<Scalar> v = (a.value().array().colwise() / s.value().col(0).array()).matrix();
    return a.graph().record(Op::DivRows, std::move(v), {a.id(), s.id()});
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a)
{
    Matrix<Scalar> v(1, 1);
    v(0, 0) = a.value().sum();
    return a.graph().record(Op::Sum, std::move(v), {a.id()});
}

template <typename Scalar>
Var<Scalar> row_sum(Var<Scalar> a)
{
    return a.graph().record(Op::RowSum, a.value().rowwise().sum(), {a.id()});
}

template <typename Scalar>
Var<Scalar> dropout_mask(Var<Scalar> a, Matrix<Scalar> mask)
{
    require_same_shape(Op::DropoutMask, a.value(), mask);
    auto out = a.graph().record(Op::DropoutMask, a.value().cwiseProduct(mask), {a.id()});
    out.graph().node(out.id()).aux = std::move(mask);
    return out;
}

template <typename Scalar>
Var<Scalar> neg_log_pick(Var<Scalar> p, Eigen::Index k)
{
    if (p.rows() != 1 || k < 0 || k >= p.cols())
        throw ShapeError("neg_log_pick: label " + std::to_string(k) + " invalid for distribution of shape " +
                         shape_string(p.rows(), p.cols()));
    Matrix<Scalar> v(1, 1);
    v(0, 0) = -std::log(std::max(p.value()(0, k), Scalar(kProbabilityFloor)));
    auto out = p.graph().record(Op::NegLogPick, std::move(v), {p.id()});
    out.graph().node(out.id()).index = {k};
    return out;
}

#define BIMPM_INSTANTIATE_DIFF(S)                                                                                     \
    template struct Parameter<S>;                                                                                      \
    template class ParamStore<S>;                                                                                      \
    template class Var<S>;                                                                                             \
    template class Graph<S>;                                                                                           \
    template Var<S> matmul(Var<S>, Var<S>);                                                                            \
    template Var<S> add(Var<S>, Var<S>);                                                                               \
    template Var<S> sub(Var<S>, Var<S>);                                                                               \
    template Var<S> add_rowwise(Var<S>, Var<S>);                                                                       \
    template Var<S> cmul(Var<S>, Var<S>);                                                                              \
    template Var<S> scale(Var<S>, S);                                                                                  \
    template Var<S> add_scalar(Var<S>, S);                                                                             \
    template Var<S> tanh(Var<S>);                                                                                      \
    template Var<S> sigmoid(Var<S>);                                                                                   \
    template Var<S> relu(Var<S>);                                                                                      \
    template Var<S> softmax(Var<S>);                                                                                   \
    template Var<S> concat_cols(std::span<const Var<S>>);                                                              \
    template Var<S> concat_rows(std::span<const Var<S>>);                                                              \
    template Var<S> slice_rows(Var<S>, Eigen::Index, Eigen::Index);                                                    \
    template Var<S> slice_cols(Var<S>, Eigen::Index, Eigen::Index);                                                    \
    template Var<S> gather_rows(Var<S>, std::vector<Eigen::Index>);                                                    \
    template Var<S> max_reduce(std::span<const Var<S>>);                                                               \
    template Var<S> segment_max(Var<S>, Eigen::Index);                                                                 \
    template Var<S> row_norm(Var<S>);                                                                                  \
    template Var<S> cosine_rows(Var<S>, Var<S>);                                                                       \
    template Var<S> cosine_matrix(Var<S>, Var<S>);                                                                     \
    template Var<S> mp_cosine_rows(Var<S>, Var<S>, Var<S>);                                                            \
    template Var<S> div_rows(Var<S>, Var<S>);                                                                          \
    template Var<S> sum(Var<S>);                                                                                       \
    template Var<S> row_sum(Var<S>);                                                                                   \
    template Var<S> dropout_mask(Var<S>, Matrix<S>);                                                                   \
    template Var<S> neg_log_pick(Var<S>, Eigen::Index);

BIMPM_INSTANTIATE_DIFF(float)
BIMPM_INSTANTIATE_DIFF(double)

} // namespace bimpm
