/*
 * Copyright 2026 The afusion Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "afusion/gradcheck.hpp"
#include "afusion/layers.hpp"
#include "test_support.hpp"

namespace afusion {
namespace {

using testing::bitwise_equal;
using testing::max_abs_diff;
using testing::random_tensor;

// --- Linear -----------------------------------------------------------------

TEST(LinearLayer, IdentityWeightsPassInputThrough) {
  LinearLayer layer(3, 3);
  layer.weight() = Tensor::identity(3);
  Rng rng(1);
  const Tensor x = random_tensor({4, 3}, rng);
  EXPECT_TRUE(bitwise_equal(layer.forward(x), x));
}

TEST(LinearLayer, ZeroInputReplicatesBias) {
  Rng rng(2);
  LinearLayer layer(3, 2, rng);
  const Tensor y = layer.forward(Tensor::zeros({5, 3}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(y(i, 0), layer.bias()[0]);
    EXPECT_EQ(y(i, 1), layer.bias()[1]);
  }
}

TEST(LinearLayer, BackwardMatchesHandComputation) {
  LinearLayer layer(2, 2);
  layer.weight() = Tensor::matrix({{1, 2}, {3, 4}});
  layer.bias() = Tensor::vector({0.5, -0.5});
  const Tensor x = Tensor::matrix({{1, -1}, {2, 0}});
  EXPECT_TRUE(bitwise_equal(layer.forward(x), Tensor::matrix({{-0.5, -1.5}, {2.5, 5.5}})));
  const Tensor g = Tensor::matrix({{1, 0}, {0, 2}});
  const Tensor dx = layer.backward(g);
  // dx = g W, gradW = g^T x, gradb = column sums of g
  EXPECT_TRUE(bitwise_equal(dx, Tensor::matrix({{1, 2}, {6, 8}})));
  EXPECT_TRUE(bitwise_equal(layer.grad_weight(), Tensor::matrix({{1, -1}, {4, 0}})));
  EXPECT_TRUE(bitwise_equal(layer.grad_bias(), Tensor::vector({1, 2})));
}

TEST(LinearLayer, ShapeErrors) {
  LinearLayer layer(3, 2);
  EXPECT_THROW(layer.forward(Tensor::zeros({2, 4})), ShapeMismatch);
  layer.forward(Tensor::zeros({2, 3}));
  EXPECT_THROW(layer.backward(Tensor::zeros({3, 2})), ShapeMismatch);
}

TEST(LinearLayer, BackwardBeforeForwardThrows) {
  LinearLayer layer(3, 2);
  EXPECT_THROW(layer.backward(Tensor::zeros({1, 2})), BackwardBeforeForward);
  layer.forward(Tensor::zeros({1, 3}));
  layer.backward(Tensor::zeros({1, 2}));
  EXPECT_THROW(layer.backward(Tensor::zeros({1, 2})), BackwardBeforeForward);
}

TEST(LinearLayer, GradientsAccumulateAndZeroExactly) {
  Rng rng(3);
  LinearLayer layer(4, 3, rng);
  // One row, so each accumulated entry is a single product and doubling is exact.
  const Tensor x = random_tensor({1, 4}, rng);
  const Tensor g = random_tensor({1, 3}, rng);
  layer.forward(x);
  layer.backward(g);
  const Tensor once = layer.grad_weight();
  const Tensor once_b = layer.grad_bias();
  layer.forward(x);
  layer.backward(g);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(layer.grad_weight()[i], 2.0 * once[i]);
  for (std::size_t i = 0; i < once_b.size(); ++i) EXPECT_EQ(layer.grad_bias()[i], 2.0 * once_b[i]);
  layer.zero_grads();
  for (double v : layer.grad_weight().values()) EXPECT_EQ(v, 0.0);
  for (double v : layer.grad_bias().values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(layer.grad_weight().shape(), layer.weight().shape());
  EXPECT_EQ(layer.grad_bias().shape(), layer.bias().shape());
}

TEST(LinearLayer, SmallLayerPassesGradientCheck) {
  Rng init(5, streams::kWeightInit);
  LinearLayer layer(3, 2, init);
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  const auto report = gradcheck(layer, {4, 3}, opt);
  EXPECT_TRUE(report.pass) << report.max_rel_error();
  EXPECT_EQ(report.entries.size(), 3u);  // weight, bias, input
}

TEST(LinearLayer, DoubledWeightGradientFailsGradientCheck) {
  Rng init(5, streams::kWeightInit);
  LinearLayer layer(3, 2, init);
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  opt.corrupt_factor = 2.0;
  const auto report = gradcheck(layer, {4, 3}, opt);
  EXPECT_FALSE(report.pass);
  EXPECT_NEAR(report.max_rel_error(), 0.5, 1e-6);
}

// --- Activations ------------------------------------------------------------

TEST(Sigmoid, ClosedFormValues) {
  Sigmoid s;
  EXPECT_EQ(s.forward(Tensor::vector({0.0}))[0], 0.5);
  EXPECT_EQ(s.backward(Tensor::vector({1.0}))[0], 0.25);
}

TEST(Sigmoid, OutputsStrictlyInsideUnitInterval) {
  Sigmoid s;
  const Tensor y = s.infer(Tensor::vector({-800.0, -40.0, 40.0, 800.0}));
  for (double v : y.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Sigmoid, RejectsNonFinite) {
  Sigmoid s;
  EXPECT_THROW(s.forward(Tensor::vector({std::nan("")})), NonFiniteInput);
}

TEST(Relu, ForwardAndBackward) {
  Relu r;
  const Tensor y = r.forward(Tensor::vector({-2.0, 0.0, 3.0}));
  EXPECT_TRUE(bitwise_equal(y, Tensor::vector({0.0, 0.0, 3.0})));
  EXPECT_TRUE(bitwise_equal(r.backward(Tensor::vector({5.0, 5.0, 5.0})),
                            Tensor::vector({0.0, 0.0, 5.0})));
  EXPECT_THROW(r.backward(Tensor::vector({1.0, 1.0, 1.0})), BackwardBeforeForward);
  EXPECT_THROW(r.forward(Tensor::vector({std::numeric_limits<double>::infinity()})),
               NonFiniteInput);
}

// --- Self-attention ----------------------------------------------------------

TEST(SelfAttention, ScaleIsInverseSquareRootOfWidth) {
  for (std::size_t d = 1; d <= 9; ++d) {
    EXPECT_EQ(SelfAttentionBlock(d).scale(), 1.0 / std::sqrt(static_cast<double>(d)));
  }
}

TEST(SelfAttention, SingleFrameOutputIsValueProjection) {
  Rng rng(7);
  SelfAttentionBlock block(4, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const Tensor out = block.forward(x);
  EXPECT_TRUE(bitwise_equal(out, matmul(x, block.wv())));
  EXPECT_EQ(block.last_attention().front()(0, 0), 1.0);
}

TEST(SelfAttention, ZeroQueryKeyWeightsGiveUniformAttention) {
  Rng rng(8);
  SelfAttentionBlock block(3, rng);
  block.wq().fill(0.0);
  block.wk().fill(0.0);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor out = block.forward(x);
  const Tensor a = block.last_attention().front();
  for (double v : a.values()) EXPECT_EQ(v, 0.25);
  const Tensor v_mean = mean(matmul(x, block.wv()), 0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(i, c), v_mean[c], 1e-15);
  }
}

TEST(SelfAttention, MatchesStepByStepRecomputation) {
  Rng rng(9);
  SelfAttentionBlock block(4, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor q = matmul(x, block.wq());
  const Tensor k = matmul(x, block.wk());
  const Tensor v = matmul(x, block.wv());
  const Tensor a = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(4.0)));
  const Tensor expected = matmul(a, v);
  const Tensor out = block.forward(x);
  EXPECT_LE(max_abs_diff(out, expected), 1e-14);
  EXPECT_LE(max_abs_diff(block.last_attention().front(), a), 1e-15);
}

TEST(SelfAttention, BatchedInputMatchesPerSequenceCalls) {
  Rng rng(10);
  SelfAttentionBlock block(3, rng);
  const Tensor x = random_tensor({2, 4, 3}, rng);
  const Tensor out = block.infer(x);
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_TRUE(bitwise_equal(slice_batch(out, b), block.infer(slice_batch(x, b))));
  }
}

TEST(SelfAttention, ZeroUpstreamGivesZeroGradients) {
  Rng rng(11);
  SelfAttentionBlock block(3, rng);
  block.forward(random_tensor({4, 3}, rng));
  const Tensor dx = block.backward(Tensor::zeros({4, 3}));
  for (double v : dx.values()) EXPECT_EQ(v, 0.0);
  for (const Tensor* g : {&block.grad_wq(), &block.grad_wk(), &block.grad_wv()}) {
    for (double v : g->values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(SelfAttention, UniformAttentionValueGradientHandComputed) {
  // With Wq = Wk = 0 every output row is the mean of V = X Wv, so for
  // upstream G: dWv[r][c] = (1/T) * (sum_t X[t][r]) * (sum_t G[t][c]).
  // X = [[1,2],[3,4]], G = I: column sums [4,6] and [1,1], T = 2.
  SelfAttentionBlock block(2);
  block.wv() = Tensor::matrix({{0.3, -0.7}, {1.1, 0.2}});
  block.forward(Tensor::matrix({{1, 2}, {3, 4}}));
  block.backward(Tensor::identity(2));
  EXPECT_TRUE(bitwise_equal(block.grad_wv(), Tensor::matrix({{2, 2}, {3, 3}})));
  for (double v : block.grad_wq().values()) EXPECT_EQ(v, 0.0);
  for (double v : block.grad_wk().values()) EXPECT_EQ(v, 0.0);
}

TEST(SelfAttention, AttentionRowsAreStochastic) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = rng.below(6) + 1, t = rng.below(8) + 1;
    SelfAttentionBlock block(d, rng);
    block.forward(random_tensor({t, d}, rng, -3.0, 3.0));
    const Tensor a = block.last_attention().front();
    for (std::size_t i = 0; i < t; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        EXPECT_GE(a(i, j), 0.0);
        row += a(i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

TEST(SelfAttention, PermutingRowsPermutesOutputBitwise) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = rng.below(6) + 1, t = rng.below(7) + 2;
    SelfAttentionBlock block(d, rng);
    const Tensor x = random_tensor({t, d}, rng, -2.0, 2.0);
    std::vector<std::size_t> perm(t);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Tensor xp({t, d});
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < d; ++c) xp(i, c) = x(perm[i], c);
    }
    const Tensor out = block.infer(x);
    const Tensor outp = block.infer(xp);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        ASSERT_EQ(std::bit_cast<std::uint64_t>(outp(i, c)),
                  std::bit_cast<std::uint64_t>(out(perm[i], c)));
      }
    }
  }
}

TEST(SelfAttention, GradientsAccumulateAcrossCalls) {
  Rng rng(14);
  SelfAttentionBlock block(3, rng);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor g = random_tensor({4, 3}, rng);
  block.forward(x);
  block.backward(g);
  const Tensor once = block.grad_wk();
  block.forward(x);
  block.backward(g);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(block.grad_wk()[i], 2.0 * once[i]);
  block.zero_grads();
  for (double v : block.grad_wk().values()) EXPECT_EQ(v, 0.0);
}

TEST(SelfAttention, BackwardTwiceWithoutForwardThrows) {
  SelfAttentionBlock block(2);
  EXPECT_THROW(block.backward(Tensor::zeros({2, 2})), BackwardBeforeForward);
  block.forward(Tensor::ones({2, 2}));
  block.backward(Tensor::zeros({2, 2}));
  EXPECT_THROW(block.backward(Tensor::zeros({2, 2})), BackwardBeforeForward);
}

TEST(SelfAttention, WidthMismatchThrows) {
  SelfAttentionBlock block(3);
  EXPECT_THROW(block.forward(Tensor::zeros({2, 4})), ShapeMismatch);
}

TEST(SelfAttention, ReferenceBlockPassesGradientCheck) {
  Rng init(1, streams::kWeightInit);
  SelfAttentionBlock block(4, init);
  GradCheckOptions opt;
  opt.tolerance = 1e-5;
  const auto report = gradcheck(block, {3, 4}, opt);
  EXPECT_TRUE(report.pass) << report.max_rel_error();
}

// --- Gradient checker ----------------------------------------------------------

class GradCheckSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradCheckSuite, TwentySeedsPass) {
  const auto result = run_gradcheck_suite(GetParam(), 20, 1);
  EXPECT_TRUE(result.pass()) << GetParam() << " max " << result.max_rel_error;
  EXPECT_LT(result.max_rel_error, result.tolerance);
}

TEST_P(GradCheckSuite, CorruptedGradientIsCaught) {
  const auto result = run_gradcheck_suite(GetParam(), 5, 1, 2.0);
  EXPECT_EQ(result.failures, 5u);
}

TEST_P(GradCheckSuite, ReportIsDeterministic) {
  const auto a = run_gradcheck_suite(GetParam(), 3, 17);
  const auto b = run_gradcheck_suite(GetParam(), 3, 17);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
}

INSTANTIATE_TEST_SUITE_P(AllTargets, GradCheckSuite,
                         ::testing::ValuesIn(gradcheck_suite_names()));

TEST(GradCheck, ZeroToleranceRejected) {
  LinearLayer layer(2, 2);
  GradCheckOptions opt;
  opt.tolerance = 0.0;
  EXPECT_THROW(gradcheck(layer, {1, 2}, opt), InvalidConfig);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(2.0, 1.0, 1e-5), 0.5);
  EXPECT_EQ(relative_error(0.0, 1e-7, 1e-5), 1e-7 / 1e-5);
}

}  // namespace
}  // namespace afusion
