#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "prodigy/autodiff.hpp"

using namespace prodigy::ad;

namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

/// Reduces a matrix output to a scalar with fixed non-uniform row and column weights.
Var probe(Tape& t, const Var& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Var r = t.constant(random_mat(1, static_cast<int>(out.rows()), rng));
  Var c = t.constant(random_mat(static_cast<int>(out.cols()), 1, rng));
  return matmul(matmul(r, out), c);
}

double eval(const std::vector<Mat>& inputs, const Fn& f) {
  Tape t;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(t.constant(m));
  return f(t, vars).value()(0, 0);
}

/// Central differences against backward(), entry by entry.
void check_gradient(std::vector<Mat> inputs, const Fn& f, double h = 1e-6, double rtol = 1e-6,
                    double atol = 1e-7) {
  Tape t;
  std::vector<Mat> grads;
  for (const Mat& m : inputs) grads.push_back(Mat::Zero(m.rows(), m.cols()));
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(t.parameter(inputs[i], &grads[i]));
  Var out = f(t, vars);
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == 1);
  t.backward(out);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r)
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const double keep = inputs[i](r, c);
        inputs[i](r, c) = keep + h;
        const double up = eval(inputs, f);
        inputs[i](r, c) = keep - h;
        const double down = eval(inputs, f);
        inputs[i](r, c) = keep;
        const double numeric = (up - down) / (2 * h);
        const double analytic = grads[i](r, c);
        const double scale = std::max(std::abs(numeric), std::abs(analytic));
        INFO("input " << i << " entry (" << r << ", " << c << ") analytic " << analytic << " numeric " << numeric);
        CHECK(std::abs(analytic - numeric) <= atol + rtol * scale);
      }
}

}  // namespace

TEST_CASE("dense algebra gradients") {
  std::mt19937_64 rng(1);
  check_gradient({random_mat(3, 4, rng), random_mat(4, 2, rng)},
                 [](Tape& t, const std::vector<Var>& v) { return probe(t, matmul(v[0], v[1])); });
  check_gradient({random_mat(3, 4, rng), random_mat(3, 4, rng)}, [](Tape& t, const std::vector<Var>& v) {
    return probe(t, sub(add(v[0], v[1]), scale(v[1], 2.5)));
  });
  check_gradient({random_mat(5, 3, rng), random_mat(1, 3, rng)},
                 [](Tape& t, const std::vector<Var>& v) { return probe(t, add_row(v[0], v[1])); });
  check_gradient({random_mat(4, 4, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, relu(v[0])); });
  check_gradient({random_mat(3, 2, rng), random_mat(3, 3, rng)}, [](Tape& t, const std::vector<Var>& v) {
    const Var parts[] = {v[0], v[1], v[0]};
    return probe(t, hcat(parts));
  });
  check_gradient({random_mat(2, 3, rng), random_mat(4, 3, rng)}, [](Tape& t, const std::vector<Var>& v) {
    const Var parts[] = {v[1], v[0]};
    return probe(t, vcat(parts));
  });
  check_gradient({random_mat(3, 3, rng)}, [](Tape&, const std::vector<Var>& v) { return sum(v[0]); });
}

TEST_CASE("indexing and aggregation gradients") {
  std::mt19937_64 rng(2);
  check_gradient({random_mat(4, 3, rng)}, [](Tape& t, const std::vector<Var>& v) {
    return probe(t, gather_rows(v[0], {3, 0, 0, 2, 3}));
  });
  check_gradient({random_mat(5, 2, rng)}, [](Tape& t, const std::vector<Var>& v) {
    return probe(t, scatter_add_rows(v[0], {1, 1, 0, 3, 1}, 4));
  });
  auto s = std::make_shared<SparseMat>(3, 4);
  s->insert(0, 1) = 0.5;
  s->insert(0, 3) = 0.5;
  s->insert(2, 0) = 1.0;
  s->insert(1, 2) = -2.0;
  s->makeCompressed();
  check_gradient({random_mat(4, 3, rng)}, [s](Tape& t, const std::vector<Var>& v) { return probe(t, spmm(s, v[0])); });
  check_gradient({random_mat(5, 4, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, col_max(v[0])); });
  check_gradient({random_mat(4, 1, rng), random_mat(4, 3, rng)},
                 [](Tape& t, const std::vector<Var>& v) { return probe(t, mul_rows(v[0], v[1])); });
  check_gradient({random_mat(6, 1, rng)}, [](Tape& t, const std::vector<Var>& v) {
    return probe(t, segment_softmax(v[0], {0, 1, 0, 2, 1, 0}, 3));
  });
}

TEST_CASE("segment softmax sums to one per segment") {
  Tape t;
  Var s = t.constant((Mat(5, 1) << 1.0, 2.0, -3.0, 0.5, 100.0).finished());
  Var a = segment_softmax(s, {0, 0, 1, 1, 2}, 3);
  CHECK(a.value()(0, 0) + a.value()(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.value()(2, 0) + a.value()(3, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.value()(4, 0) == 1.0);
}

TEST_CASE("head and loss gradients") {
  std::mt19937_64 rng(3);
  check_gradient({random_mat(3, 4, rng), random_mat(2, 4, rng)},
                 [](Tape& t, const std::vector<Var>& v) { return probe(t, cosine_matrix(v[0], v[1])); });
  check_gradient({random_mat(4, 3, rng)},
                 [](Tape&, const std::vector<Var>& v) { return cross_entropy_sum(v[0], {0, 2, 1, 2}); });
  const Mat target = random_mat(3, 2, rng);
  check_gradient({random_mat(3, 2, rng)}, [target](Tape&, const std::vector<Var>& v) { return mse_rows_sum(v[0], target); });
}

TEST_CASE("cosine of a zero row is zero with zero gradient") {
  Tape t;
  Mat ga = Mat::Zero(2, 3);
  Var a = t.parameter((Mat(2, 3) << 0, 0, 0, 1, 2, 3).finished(), &ga);
  Var b = t.constant((Mat(1, 3) << 1, 0, 0).finished());
  Var c = cosine_matrix(a, b);
  CHECK(c.value()(0, 0) == 0.0);
  t.backward(sum(c));
  CHECK(ga.row(0).isZero(0.0));
}

TEST_CASE("cross entropy of uniform logits is log m per row") {
  Tape t;
  Var x = t.constant(Mat::Constant(3, 4, 0.7));
  CHECK(cross_entropy_sum(x, {0, 1, 3}).value()(0, 0) == doctest::Approx(3 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("batch norm gradients over groups with non-contributing rows") {
  std::mt19937_64 rng(4);
  const std::vector<int> group{0, 0, 1, 0, 1, 1, 0};
  const std::vector<char> contributes{1, 1, 1, 0, 1, 0, 1};
  const Mat rm = random_mat(2, 3, rng), rv = random_mat(2, 3, rng).cwiseAbs();
  for (bool training : {true, false}) {
    check_gradient({random_mat(7, 3, rng), random_mat(1, 3, rng), random_mat(1, 3, rng)},
                   [&](Tape& t, const std::vector<Var>& v) {
                     return probe(t, batch_norm(v[0], v[1], v[2], group, 2, training, &rm, &rv, 1e-5, nullptr,
                                                contributes));
                   });
  }
  // every row contributes
  check_gradient({random_mat(5, 2, rng), random_mat(1, 2, rng), random_mat(1, 2, rng)},
                 [](Tape& t, const std::vector<Var>& v) {
                   const std::vector<int> one(5, 0);
                   return probe(t, batch_norm(v[0], v[1], v[2], one, 1, true, nullptr, nullptr, 1e-5, nullptr));
                 });
}

TEST_CASE("batch norm statistics come from contributing rows only") {
  Tape t;
  Mat x(4, 1);
  x << 1.0, 3.0, 1000.0, 2.0;
  const std::vector<int> group(4, 0);
  const std::vector<char> contributes{1, 1, 0, 0};
  BatchNormObservation obs;
  Var y = batch_norm(t.constant(x), t.constant(Mat::Ones(1, 1)), t.constant(Mat::Zero(1, 1)), group, 1, true,
                     nullptr, nullptr, 0.0, &obs, contributes);
  CHECK(obs.counts[0] == 2);
  CHECK(obs.mean(0, 0) == 2.0);
  CHECK(obs.var(0, 0) == 1.0);
  CHECK(y.value()(0, 0) == -1.0);
  CHECK(y.value()(1, 0) == 1.0);
  CHECK(y.value()(2, 0) == 998.0);
  CHECK(y.value()(3, 0) == 0.0);
}

TEST_CASE("batch norm with a single contributing row passes through with the affine shift") {
  Tape t;
  Mat x(2, 2);
  x << 4.0, -1.0, 7.0, 2.0;
  const std::vector<int> group(2, 0);
  const std::vector<char> contributes{1, 0};
  Var y = batch_norm(t.constant(x), t.constant(Mat::Constant(1, 2, 2.0)), t.constant(Mat::Constant(1, 2, 0.5)),
                     group, 1, true, nullptr, nullptr, 1e-5, nullptr, contributes);
  CHECK(y.value().allFinite());
  CHECK(y.value()(0, 0) == 8.5);
  CHECK(y.value()(1, 1) == 4.5);
}

TEST_CASE("parameters used twice accumulate both gradient paths") {
  Tape t;
  Mat g = Mat::Zero(1, 1);
  Var x = t.parameter(Mat::Constant(1, 1, 3.0), &g);
  t.backward(matmul(x, x));
  CHECK(g(0, 0) == 6.0);
}
