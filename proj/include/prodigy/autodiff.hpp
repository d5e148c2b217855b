#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace prodigy::ad {

using Mat = Eigen::MatrixXd;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a computation and replays it backwards. Not thread-safe; use one tape per thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  Var constant(Mat value);
  /// Leaf whose gradient is added into `*grad_sink` by backward(); nullptr sink makes it a constant.
  Var parameter(const Mat& value, Mat* grad_sink);
  Var record(Mat value, std::span<const Var> parents, Backward back);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void accumulate(const Var& v, const Mat& g);

  /// Backpropagates from a 1x1 root, scaling the seed gradient by `seed`.
  void backward(const Var& root, double seed = 1.0);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Backward back;
    Mat* sink = nullptr;
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }

// ---- dense algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a 1 x c row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
/// Sum of all entries, 1x1.
Var sum(const Var& a);

// ---- indexing and graph aggregation --------------------------------------
Var gather_rows(const Var& a, std::vector<int> index);
/// out.row(index[i]) += a.row(i) for an output of `out_rows` rows.
Var scatter_add_rows(const Var& a, std::vector<int> index, Eigen::Index out_rows);
Var spmm(std::shared_ptr<const SparseMat> s, const Var& a);
/// Column-wise maximum, 1 x c. Ties resolve to the first row.
Var col_max(const Var& a);
/// Scales row i of `a` by w(i, 0).
Var mul_rows(const Var& w, const Var& a);
/// Softmax of a column of scores within groups given by `segment` (one id per row).
Var segment_softmax(const Var& scores, std::vector<int> segment, int num_segments);

// ---- heads and losses -----------------------------------------------------
/// Pairwise cosine similarity of rows, a.rows() x b.rows(). Pairs with a zero-norm row
/// evaluate to 0 with zero gradient.
Var cosine_matrix(const Var& a, const Var& b);
/// Sum over rows of -log softmax(logits)[label], 1x1.
Var cross_entropy_sum(const Var& logits, std::vector<int> labels);
/// Sum over rows of the per-row mean squared error, 1x1.
Var mse_rows_sum(const Var& pred, const Mat& target);

// ---- normalization --------------------------------------------------------
struct BatchNormObservation {
  Mat mean;                 // roles x c
  Mat var;                  // roles x c, biased
  std::vector<int> counts;  // rows seen per role
};

/// Batch normalization with statistics pooled per role. Rows whose `contributes` flag is 0
/// are normalized with their role's statistics but do not enter them; an empty span means
/// every row contributes. In training mode a role with fewer than two contributing rows is
/// passed through unnormalized (identity then affine shift). In inference mode
/// `running_mean` / `running_var` (roles x c) are used.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, std::span<const int> role, int num_roles,
               bool training, const Mat* running_mean, const Mat* running_var, double eps,
               BatchNormObservation* observed, std::span<const char> contributes = {});

}  // namespace prodigy::ad
