#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bimpm/error.hpp"

namespace bimpm
{

/// Dense row-major matrix. Sequences are stored one time step per row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Floor on the cosine denominator, so the cosine of a zero vector is 0 instead of NaN.
inline constexpr double kCosineFloor = 1e-8;

/// Lower clamp on probabilities fed to the log-likelihood.
inline constexpr double kProbabilityFloor = 1e-12;

enum class Op
{
    Leaf,
    Param,
    MatMul,
    Add,
    Sub,
    AddRowwise,
    CwiseMul,
    Scale,
    AddScalar,
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
    ConcatCols,
    ConcatRows,
    SliceRows,
    SliceCols,
    GatherRows,
    MaxReduce,
    SegmentMax,
    RowNorm,
    CosineRows,
    CosineMatrix,
    MpCosineRows,
    DivRows,
    Sum,
    RowSum,
    DropoutMask,
    NegLogPick,
};

std::string_view op_name(Op op);

/// A named persistent tensor. Graphs reference parameters as leaves and accumulate into `grad`.
template <typename Scalar>
struct Parameter
{
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool trainable = true;
};

/// Owns every parameter of a model in registration order. Addresses are stable.
template <typename Scalar>
class ParamStore
{
public:
    Parameter<Scalar>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool trainable = true);

    Parameter<Scalar>& at(const std::string& name);
    const Parameter<Scalar>& at(const std::string& name) const;
    Parameter<Scalar>* find(const std::string& name);

    void zero_grad();

    std::size_t size() const { return params_.size(); }
    Parameter<Scalar>& operator[](std::size_t i) { return *params_[i]; }
    const Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

    /// Total number of scalar entries across all parameters.
    Eigen::Index entry_count() const;

private:
    std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

template <typename Scalar>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var
{
public:
    Var() = default;
    Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

    const Matrix<Scalar>& value() const;
    const Matrix<Scalar>& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Scalar scalar() const { return value()(0, 0); }

    Graph<Scalar>& graph() const { return *graph_; }
    int id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph<Scalar>* graph_ = nullptr;
    int id_ = -1;
};

template <typename Scalar>
struct Node
{
    Op op = Op::Leaf;
    Matrix<Scalar> value; // empty for parameter leaves, which read Parameter::value
    Matrix<Scalar> grad;
    std::vector<int> parents;
    // Op-specific integer payload: gather indices, argmax positions, slice bounds, label.
    std::vector<Eigen::Index> index;
    Matrix<Scalar> aux;
    Scalar scalar{};
    Parameter<Scalar>* param = nullptr;
    bool requires_grad = false;
};

/// Tape of eagerly evaluated nodes. Values are computed when an op is recorded, so the
/// forward pass of any node is available immediately through Var::value().
template <typename Scalar>
class Graph
{
public:
    Graph() { nodes_.reserve(1024); }
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var<Scalar> constant(Matrix<Scalar> value);
    /// Leaf bound to a parameter. Repeated calls for the same parameter return the same node.
    Var<Scalar> param(Parameter<Scalar>& p);

    /// Reverse sweep from a 1x1 loss. Accumulates into every trainable parameter's grad.
    void backward(Var<Scalar> loss);

    Var<Scalar> record(Op op, Matrix<Scalar> value, std::vector<int> parents);

    const Matrix<Scalar>& value(int id) const;
    /// Gradient storage of a node; for parameter leaves this is the parameter's own grad.
    Matrix<Scalar>& grad_target(int id);

    Node<Scalar>& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node<Scalar>& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

private:
    void accumulate(int id, const Matrix<Scalar>& delta);
    void backprop_node(int id);

    std::vector<Node<Scalar>> nodes_;
    std::map<const Parameter<Scalar>*, int> param_nodes_;
};

// Ops. Every op validates shapes and throws ShapeError naming the op and both operands.

template <typename Scalar> Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
/// a (T x n) plus the row vector b (1 x n) added to every row.
template <typename Scalar> Var<Scalar> add_rowwise(Var<Scalar> a, Var<Scalar> b);
/// Element-wise (Hadamard) product.
template <typename Scalar> Var<Scalar> cmul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> scale(Var<Scalar> a, Scalar s);
template <typename Scalar> Var<Scalar> add_scalar(Var<Scalar> a, Scalar s);
template <typename Scalar> Var<Scalar> tanh(Var<Scalar> a);
template <typename Scalar> Var<Scalar> sigmoid(Var<Scalar> a);
template <typename Scalar> Var<Scalar> relu(Var<Scalar> a);
/// Softmax over each row independently.
template <typename Scalar> Var<Scalar> softmax(Var<Scalar> a);
template <typename Scalar> Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> slice_rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count);
template <typename Scalar> Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count);
/// Row r of the result is row indices[r] of a. Backward scatter-adds.
template <typename Scalar> Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Eigen::Index> indices);
/// Element-wise maximum over a set of equally shaped nodes. Gradient goes to the first maximiser.
template <typename Scalar> Var<Scalar> max_reduce(std::span<const Var<Scalar>> parts);
/// Element-wise maximum over consecutive groups of `group` rows: (G*group x c) -> (G x c).
template <typename Scalar> Var<Scalar> segment_max(Var<Scalar> a, Eigen::Index group);
/// Euclidean norm of each row: (T x n) -> (T x 1).
template <typename Scalar> Var<Scalar> row_norm(Var<Scalar> a);
/// Cosine of each row pair: (T x n), (T x n) -> (T x 1).
template <typename Scalar> Var<Scalar> cosine_rows(Var<Scalar> a, Var<Scalar> b);
/// Cosine of every row pair: (M x n), (N x n) -> (M x N).
template <typename Scalar> Var<Scalar> cosine_matrix(Var<Scalar> a, Var<Scalar> b);
/// Multi-perspective cosine of each row pair: entry (t, k) = cos(w_k o a_t, w_k o b_t).
/// (T x n), (T x n), (l x n) -> (T x l).
template <typename Scalar> Var<Scalar> mp_cosine_rows(Var<Scalar> a, Var<Scalar> b, Var<Scalar> w);
/// Divides row t of a by the scalar s(t, 0).
template <typename Scalar> Var<Scalar> div_rows(Var<Scalar> a, Var<Scalar> s);
template <typename Scalar> Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar> Var<Scalar> row_sum(Var<Scalar> a);
/// Multiplies by a fixed mask (already scaled for inverted dropout).
template <typename Scalar> Var<Scalar> dropout_mask(Var<Scalar> a, Matrix<Scalar> mask);
/// -log(max(p(0, k), 1e-12)) for a 1 x K distribution.
template <typename Scalar> Var<Scalar> neg_log_pick(Var<Scalar> p, Eigen::Index k);

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts)
{
    return concat_cols(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts)
{
    return concat_rows(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b)
{
    return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b)
{
    return sub(a, b);
}

template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b)
{
    return matmul(a, b);
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

} // namespace bimpm
