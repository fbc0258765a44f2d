#include <gtest/gtest.h>

#include "kfprop/gradcheck.hpp"
#include "kfprop/ops.hpp"
#include "reference_impls.hpp"

using namespace kfprop;
using kfref::rand_t;

TEST(Autodiff, ForwardValues) {
  Graph<double> g;
  Tensor<double> a(Shape{3}, {1.0, -2.0, 0.5});
  Tensor<double> b(Shape{3}, {2.0, 3.0, -1.0});
  GVar<double> s = add(g, g.input(a), g.input(b));
  EXPECT_EQ(g.val(s).data, (std::vector<double>{3.0, 1.0, -0.5}));
  GVar<double> m = mul(g, g.input(a), g.input(b));
  EXPECT_EQ(g.val(m).data, (std::vector<double>{2.0, -6.0, -0.5}));
  GVar<double> sc = scale(g, g.input(a), -2.0);
  EXPECT_EQ(g.val(sc).data, (std::vector<double>{-2.0, 4.0, -1.0}));
}

TEST(Autodiff, BackwardSimpleChain) {
  // d/dx sum((x*x)) = 2x
  Param<double> x("x", Tensor<double>(Shape{4}, {1.0, -2.0, 3.0, 0.5}));
  Graph<double> g;
  GVar<double> xs = g.param(x);
  g.backward(sum_all(g, mul(g, xs, xs)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad.data[i], 2.0 * x.value.data[i], 1e-14);
}

TEST(Autodiff, GradientAccumulationAcrossGraphs) {
  Rng rng(5);
  Param<double> p("p", rand_t(rng, {3, 3}));
  Tensor<double> w1 = rand_t(rng, {3, 3}), w2 = rand_t(rng, {3, 3});

  {
    Graph<double> g;
    g.backward(sum_all(g, mul(g, g.param(p), g.input(w1))));
  }
  Tensor<double> g1 = p.grad;
  p.grad.fill(0.0);
  {
    Graph<double> g;
    g.backward(sum_all(g, mul(g, g.param(p), g.input(w2))));
  }
  Tensor<double> g2 = p.grad;
  p.grad.fill(0.0);

  {
    Graph<double> g;
    g.backward(sum_all(g, mul(g, g.param(p), g.input(w1))));
  }
  {
    Graph<double> g;
    g.backward(sum_all(g, mul(g, g.param(p), g.input(w2))));
  }
  for (std::size_t i = 0; i < p.grad.numel(); ++i)
    EXPECT_NEAR(p.grad.data[i], g1.data[i] + g2.data[i], 1e-10);
}

TEST(Autodiff, BackwardConsumesGraph) {
  Param<double> p("p", Tensor<double>(Shape{2}, {1.0, 2.0}));
  Graph<double> g;
  GVar<double> loss = sum_all(g, g.param(p));
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), std::logic_error);
}

TEST(Autodiff, UnusedParamKeepsZeroGrad) {
  Param<double> used("u", Tensor<double>(Shape{2}, {1.0, 2.0}));
  Param<double> unused("n", Tensor<double>(Shape{2}, {3.0, 4.0}));
  Graph<double> g;
  g.param(unused);
  g.backward(sum_all(g, g.param(used)));
  EXPECT_EQ(unused.grad.data, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(used.grad.data, (std::vector<double>{1.0, 1.0}));
}

TEST(Autodiff, ParamDedupedByPointer) {
  Param<double> p("p", Tensor<double>(Shape{2}, {1.0, 2.0}));
  Graph<double> g;
  GVar<double> a = g.param(p);
  GVar<double> b = g.param(p);
  EXPECT_EQ(a.id, b.id);
  g.backward(sum_all(g, add(g, a, b)));
  EXPECT_EQ(p.grad.data, (std::vector<double>{2.0, 2.0}));
}

TEST(Autodiff, MatmulAdjointIdentity) {
  // with y = A x, the x-gradient of <ybar, y> must equal A^T ybar
  Rng rng(17);
  Tensor<double> A = rand_t(rng, {5, 4});
  Param<double> x("x", rand_t(rng, {4, 3}));
  Tensor<double> ybar = rand_t(rng, {5, 3});

  Graph<double> g;
  GVar<double> y = matmul(g, g.input(A), g.param(x));
  g.backward(sum_all(g, mul(g, y, g.input(ybar))));

  Tensor<double> want = kfref::ref_matmul(kfref::ref_transpose2d(A), ybar);
  EXPECT_LT(max_abs_diff(x.grad, want), 1e-12);

  // inner products agree: <ybar, A x> == <A^T ybar, x>
  double lhs = 0.0, rhs = 0.0;
  Tensor<double> Ax = kfref::ref_matmul(A, x.value);
  for (std::size_t i = 0; i < Ax.numel(); ++i) lhs += ybar.data[i] * Ax.data[i];
  for (std::size_t i = 0; i < x.value.numel(); ++i) rhs += want.data[i] * x.value.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Autodiff, GradcheckElementwiseAndReduce) {
  auto reports = run_gradcheck("elementwise", 1e-4, 0, nullptr);
  EXPECT_GE(reports.size(), 5u);
  EXPECT_TRUE(gradcheck_all_passed(reports));
  reports = run_gradcheck("reduce", 1e-4, 0, nullptr);
  EXPECT_TRUE(gradcheck_all_passed(reports));
}

TEST(Autodiff, GradcheckShapeOps) {
  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("shape", 1e-4, 0, nullptr)));
}

TEST(Autodiff, GradcheckMatmulSoftmaxLayerNorm) {
  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("matmul", 1e-4, 0, nullptr)));
  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("softmax", 1e-4, 0, nullptr)));
  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("layer_norm", 1e-4, 0, nullptr)));
}

TEST(Autodiff, GradcheckBilinearSample) {
  EXPECT_TRUE(gradcheck_all_passed(run_gradcheck("bilinear_sample", 1e-4, 0, nullptr)));
}

TEST(Autodiff, EmptyFilterMatchReported) {
  auto reports = run_gradcheck("no_such_op_name", 1e-4, 0, nullptr);
  EXPECT_TRUE(reports.empty());
  EXPECT_FALSE(gradcheck_all_passed(reports));
}
