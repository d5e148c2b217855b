#include "prodigy/autodiff.hpp"

#include <cmath>
#include <limits>

#include "prodigy/error.hpp"

namespace prodigy::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const Mat& value, Mat* grad_sink) {
  nodes_.push_back(Node{value, {}, grad_sink != nullptr, {}, grad_sink});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward back) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || needs_grad(p.id());
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(back) : Backward{}, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(const Var& v, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(const Var& root, double seed) {
  require(root.rows() == 1 && root.cols() == 1, "backward root must be 1x1");
  if (!needs_grad(root.id())) return;
  nodes_[static_cast<std::size_t>(root.id())].grad = Mat::Constant(1, 1, seed);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.sink) *n.sink += n.grad;
    if (n.back) {
      const Mat g = std::move(n.grad);
      n.grad = Mat();
      n.back(*this, g);
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() * b.value(), parents, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a.id())) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b.id())) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() + b.value(), parents, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() - b.value(), parents, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b.id())) t.accumulate(b, -g);
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  const Var parents[] = {a, row};
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), parents, [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row.id())) t.accumulate(row, g.colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  const Var parents[] = {a};
  return a.tape().record(a.value() * s, parents, [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

Var relu(const Var& a) {
  const Var parents[] = {a};
  return a.tape().record(a.value().cwiseMax(0.0), parents, [a](Tape& t, const Mat& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var hcat(std::span<const Var> parts) {
  require(!parts.empty(), "hcat of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "hcat row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [ps](Tape& t, const Mat& g) {
    Eigen::Index c = 0;
    for (const Var& p : ps) {
      if (t.needs_grad(p.id())) t.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var vcat(std::span<const Var> parts) {
  require(!parts.empty(), "vcat of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "vcat column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [ps](Tape& t, const Mat& g) {
    Eigen::Index r = 0;
    for (const Var& p : ps) {
      if (t.needs_grad(p.id())) t.accumulate(p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var sum(const Var& a) {
  const Var parents[] = {a};
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(Mat::Constant(1, 1, a.value().sum()), parents, [a, rows, cols](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(rows, cols, g(0, 0)));
  });
}

Var gather_rows(const Var& a, std::vector<int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < a.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [a, index = std::move(index)](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, ga);
  });
}

Var scatter_add_rows(const Var& a, std::vector<int> index, Eigen::Index out_rows) {
  require(static_cast<Eigen::Index>(index.size()) == a.rows(), "scatter_add_rows index size mismatch");
  Mat out = Mat::Zero(out_rows, a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < out_rows, "scatter_add_rows index out of range");
    out.row(index[i]) += a.value().row(static_cast<Eigen::Index>(i));
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [a, index = std::move(index)](Tape& t, const Mat& g) {
    Mat ga(a.rows(), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) ga.row(static_cast<Eigen::Index>(i)) = g.row(index[i]);
    t.accumulate(a, ga);
  });
}

Var spmm(std::shared_ptr<const SparseMat> s, const Var& a) {
  require(s->cols() == a.rows(), "spmm shape mismatch");
  const Var parents[] = {a};
  Mat out = (*s) * a.value();
  return a.tape().record(std::move(out), parents, [a, s](Tape& t, const Mat& g) {
    t.accumulate(a, s->transpose() * g);
  });
}

Var col_max(const Var& a) {
  require(a.rows() > 0, "col_max of empty matrix");
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(a.cols()));
  Mat out(1, a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < a.rows(); ++i)
      if (a.value()(i, j) > a.value()(best, j)) best = i;
    arg[static_cast<std::size_t>(j)] = best;
    out(0, j) = a.value()(best, j);
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [a, arg = std::move(arg)](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    for (std::size_t j = 0; j < arg.size(); ++j) ga(arg[j], static_cast<Eigen::Index>(j)) = g(0, static_cast<Eigen::Index>(j));
    t.accumulate(a, ga);
  });
}

Var mul_rows(const Var& w, const Var& a) {
  require(w.cols() == 1 && w.rows() == a.rows(), "mul_rows shape mismatch");
  const Var parents[] = {w, a};
  Mat out = a.value().array().colwise() * w.value().col(0).array();
  return a.tape().record(std::move(out), parents, [w, a](Tape& t, const Mat& g) {
    if (t.needs_grad(w.id())) t.accumulate(w, (g.array() * a.value().array()).rowwise().sum().matrix());
    if (t.needs_grad(a.id())) t.accumulate(a, (g.array().colwise() * w.value().col(0).array()).matrix());
  });
}

Var segment_softmax(const Var& scores, std::vector<int> segment, int num_segments) {
  require(scores.cols() == 1 && static_cast<Eigen::Index>(segment.size()) == scores.rows(),
          "segment_softmax shape mismatch");
  const auto n = segment.size();
  std::vector<double> mx(static_cast<std::size_t>(num_segments), -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < n; ++e) {
    require(segment[e] >= 0 && segment[e] < num_segments, "segment id out of range");
    mx[static_cast<std::size_t>(segment[e])] = std::max(mx[static_cast<std::size_t>(segment[e])], scores.value()(static_cast<Eigen::Index>(e), 0));
  }
  Mat out(static_cast<Eigen::Index>(n), 1);
  std::vector<double> z(static_cast<std::size_t>(num_segments), 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const double v = std::exp(scores.value()(static_cast<Eigen::Index>(e), 0) - mx[static_cast<std::size_t>(segment[e])]);
    out(static_cast<Eigen::Index>(e), 0) = v;
    z[static_cast<std::size_t>(segment[e])] += v;
  }
  for (std::size_t e = 0; e < n; ++e) out(static_cast<Eigen::Index>(e), 0) /= z[static_cast<std::size_t>(segment[e])];
  const Var parents[] = {scores};
  Mat alpha = out;
  return scores.tape().record(std::move(out), parents,
                              [scores, segment = std::move(segment), num_segments, alpha](Tape& t, const Mat& g) {
                                std::vector<double> dot(static_cast<std::size_t>(num_segments), 0.0);
                                for (std::size_t e = 0; e < segment.size(); ++e)
                                  dot[static_cast<std::size_t>(segment[e])] += alpha(static_cast<Eigen::Index>(e), 0) * g(static_cast<Eigen::Index>(e), 0);
                                Mat gs(alpha.rows(), 1);
                                for (std::size_t e = 0; e < segment.size(); ++e) {
                                  const auto i = static_cast<Eigen::Index>(e);
                                  gs(i, 0) = alpha(i, 0) * (g(i, 0) - dot[static_cast<std::size_t>(segment[e])]);
                                }
                                t.accumulate(scores, gs);
                              });
}

Var cosine_matrix(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "cosine_matrix width mismatch");
  constexpr double tiny = 1e-12;
  const Eigen::VectorXd na = a.value().rowwise().norm();
  const Eigen::VectorXd nb = b.value().rowwise().norm();
  Mat dots = a.value() * b.value().transpose();
  Mat out = Mat::Zero(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      if (na(i) > tiny && nb(j) > tiny) out(i, j) = dots(i, j) / (na(i) * nb(j));
  const Var parents[] = {a, b};
  Mat c = out;
  return a.tape().record(std::move(out), parents, [a, b, na, nb, c](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols()), gb = Mat::Zero(b.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (na(i) <= tiny || nb(j) <= tiny) continue;
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        ga.row(i) += gij * (b.value().row(j) / (na(i) * nb(j)) - c(i, j) * a.value().row(i) / (na(i) * na(i)));
        gb.row(j) += gij * (a.value().row(i) / (na(i) * nb(j)) - c(i, j) * b.value().row(j) / (nb(j) * nb(j)));
      }
    if (t.needs_grad(a.id())) t.accumulate(a, ga);
    if (t.needs_grad(b.id())) t.accumulate(b, gb);
  });
}

Var cross_entropy_sum(const Var& logits, std::vector<int> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "cross_entropy label count mismatch");
  const Mat& x = logits.value();
  Mat prob(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= x.cols()) throw ValidationError("label index " + std::to_string(y) + " out of range");
    const double mx = x.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (x.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    prob.row(i) = e / z;
    loss += -(x(i, y) - mx - std::log(z));
  }
  const Var parents[] = {logits};
  return logits.tape().record(Mat::Constant(1, 1, loss), parents,
                              [logits, labels = std::move(labels), prob](Tape& t, const Mat& g) {
                                Mat gl = prob;
                                for (std::size_t i = 0; i < labels.size(); ++i) gl(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
                                t.accumulate(logits, gl * g(0, 0));
                              });
}

Var mse_rows_sum(const Var& pred, const Mat& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse shape mismatch");
  const Mat diff = pred.value() - target;
  const double width = static_cast<double>(std::max<Eigen::Index>(1, pred.cols()));
  const Var parents[] = {pred};
  return pred.tape().record(Mat::Constant(1, 1, diff.squaredNorm() / width), parents,
                            [pred, diff, width](Tape& t, const Mat& g) {
                              t.accumulate(pred, diff * (2.0 * g(0, 0) / width));
                            });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, std::span<const int> role, int num_roles,
               bool training, const Mat* running_mean, const Mat* running_var, double eps,
               BatchNormObservation* observed, std::span<const char> contributes) {
  const Eigen::Index n = x.rows(), c = x.cols();
  require(static_cast<Eigen::Index>(role.size()) == n, "batch_norm role count mismatch");
  require(contributes.empty() || static_cast<Eigen::Index>(contributes.size()) == n,
          "batch_norm contribution mask mismatch");
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
          "batch_norm affine shape mismatch");
  const auto R = static_cast<std::size_t>(num_roles);
  std::vector<std::vector<Eigen::Index>> rows(R);
  std::vector<std::vector<Eigen::Index>> stat_rows(R);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    require(role[ui] >= 0 && role[ui] < num_roles, "role out of range");
    rows[static_cast<std::size_t>(role[ui])].push_back(i);
    if (contributes.empty() || contributes[ui]) stat_rows[static_cast<std::size_t>(role[ui])].push_back(i);
  }
  if (!training) {
    require(running_mean && running_var && running_mean->rows() == num_roles && running_mean->cols() == c,
            "batch_norm running statistics missing");
  }

  // mode per role: 0 = batch statistics, 1 = identity, 2 = running statistics
  std::vector<int> mode(R, training ? 0 : 2);
  Mat invstd = Mat::Zero(num_roles, c);
  Mat mean = Mat::Zero(num_roles, c);
  Mat var = Mat::Zero(num_roles, c);
  std::vector<int> counts(R, 0);
  for (std::size_t r = 0; r < R; ++r) {
    counts[r] = static_cast<int>(stat_rows[r].size());
    if (rows[r].empty()) continue;
    const auto ri = static_cast<Eigen::Index>(r);
    if (training) {
      if (stat_rows[r].size() < 2) {
        mode[r] = 1;
      } else {
        for (auto i : stat_rows[r]) mean.row(ri) += x.value().row(i);
        mean.row(ri) /= static_cast<double>(stat_rows[r].size());
        for (auto i : stat_rows[r]) var.row(ri) += (x.value().row(i) - mean.row(ri)).array().square().matrix();
        var.row(ri) /= static_cast<double>(stat_rows[r].size());
      }
    }
    if (mode[r] == 0) invstd.row(ri) = (var.row(ri).array() + eps).rsqrt().matrix();
    if (mode[r] == 2) invstd.row(ri) = (running_var->row(ri).array() + eps).rsqrt().matrix();
  }
  if (observed) *observed = {mean, var, counts};

  Mat xhat(n, c);
  for (std::size_t r = 0; r < R; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (auto i : rows[r]) {
      switch (mode[r]) {
        case 0: xhat.row(i) = ((x.value().row(i) - mean.row(ri)).array() * invstd.row(ri).array()).matrix(); break;
        case 1: xhat.row(i) = x.value().row(i); break;
        default: xhat.row(i) = ((x.value().row(i) - running_mean->row(ri)).array() * invstd.row(ri).array()).matrix(); break;
      }
    }
  }
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  const Var parents[] = {x, gamma, beta};
  return x.tape().record(
      std::move(out), parents,
      [x, gamma, beta, rows = std::move(rows), stat_rows = std::move(stat_rows), mode = std::move(mode), invstd, xhat](Tape& t, const Mat& g) {
        if (t.needs_grad(gamma.id())) t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
        if (t.needs_grad(beta.id())) t.accumulate(beta, g.colwise().sum());
        if (!t.needs_grad(x.id())) return;
        const Mat dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
        Mat gx(x.rows(), x.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].empty()) continue;
          const auto ri = static_cast<Eigen::Index>(r);
          if (mode[r] == 1) {
            for (auto i : rows[r]) gx.row(i) = dxhat.row(i);
          } else if (mode[r] == 2) {
            for (auto i : rows[r]) gx.row(i) = (dxhat.row(i).array() * invstd.row(ri).array()).matrix();
          } else {
            // every applied row depends on the pooled statistics of the contributing rows
            const double cnt = static_cast<double>(stat_rows[r].size());
            Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(x.cols()), s2 = Eigen::RowVectorXd::Zero(x.cols());
            for (auto i : rows[r]) {
              s1 += dxhat.row(i);
              s2 += (dxhat.row(i).array() * xhat.row(i).array()).matrix();
              gx.row(i) = (dxhat.row(i).array() * invstd.row(ri).array()).matrix();
            }
            for (auto i : stat_rows[r])
              gx.row(i) -= ((s1.array() + xhat.row(i).array() * s2.array()) * invstd.row(ri).array() / cnt).matrix();
          }
        }
        t.accumulate(x, gx);
      });
}

}  // namespace prodigy::ad
