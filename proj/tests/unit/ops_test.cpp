// Copyright 2026 The mdsvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "mdsvit/autograd.hpp"
#include "mdsvit/error.hpp"
#include "mdsvit/gradcheck.hpp"
#include "mdsvit/ops.hpp"
#include "mdsvit/random.hpp"
#include "oracles.hpp"

namespace mdsvit {
namespace {

Tensor f64(const Shape& shape, std::vector<double> v) { return from_values(shape, std::move(v), DType::f64); }

// Uniform values in [-1, 1] whose magnitude stays at least `gap` from zero.
Tensor away_from_zero(const Shape& shape, double gap, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) {
    const double m = rng.uniform(gap, 1.0);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return f64(shape, v).set_requires_grad(true);
}

TEST(Elementwise, HandArithmetic) {
  EXPECT_EQ(add(f64({2}, {1, 2}), f64({2}, {3, 4})).to_vector(), (std::vector<double>{4, 6}));
  EXPECT_EQ(mul(f64({2}, {2, 3}), scalar(0, DType::f64)).to_vector(), (std::vector<double>{0, 0}));
  EXPECT_EQ(sub(f64({2}, {1, 2}), f64({2}, {3, 5})).to_vector(), (std::vector<double>{-2, -3}));
  EXPECT_EQ(div(f64({2}, {1, 3}), f64({2}, {2, 4})).to_vector(), (std::vector<double>{0.5, 0.75}));
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(zeros({2, 3}), zeros({3, 2})), ShapeError);
}

TEST(Elementwise, DivisionByZeroPropagatesIeee) {
  auto v = div(f64({2}, {1, 0}), f64({2}, {0, 0})).to_vector();
  EXPECT_TRUE(std::isinf(v[0]));
  EXPECT_TRUE(std::isnan(v[1]));
}

TEST(Elementwise, MulGradientIsOtherOperand) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = grad_check("mul", [](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); },
                        std::vector<Shape>{{3, 4}, {3, 4}}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
  Tensor a = f64({3}, {1, 2, 3}).set_requires_grad(true);
  Tensor b = f64({3}, {4, -5, 6});
  backward(sum(mul(a, b)));
  EXPECT_EQ(a.grad_vector(), b.to_vector());
}

TEST(Elementwise, AllBinaryGradients) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto op : {BinaryOp::add, BinaryOp::sub, BinaryOp::mul, BinaryOp::div}) {
      Tensor a = away_from_zero({2, 3}, 0.3, seed);
      Tensor b = away_from_zero({2, 3}, 0.3, seed + 100);
      auto r = grad_check("binary", [op](const std::vector<Tensor>& in) { return elementwise(op, in[0], in[1]); },
                          {a, b}, {.seed = seed});
      EXPECT_TRUE(r.passed) << static_cast<int>(op) << " " << r.max_relative_error;
    }
    Tensor s = away_from_zero({1}, 0.3, seed + 7);
    auto r = grad_check("scalar-rhs", [](const std::vector<Tensor>& in) { return div(in[0], in[1]) + in[0] * in[1]; },
                        {away_from_zero({4}, 0.1, seed), s}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
}

TEST(Elementwise, MinMaxAwayFromTies) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor a = away_from_zero({10}, 0.0, seed);
    std::vector<double> bv = a.to_vector();
    for (auto& v : bv) v += (v > 0 ? -0.25 : 0.25);  // |a - b| = 0.25, far from the kink
    Tensor b = f64({10}, bv).set_requires_grad(true);
    auto r = grad_check("minmax", [](const std::vector<Tensor>& in) {
      return concat({minimum(in[0], in[1]), maximum(in[0], in[1])}, 0);
    }, {a, b}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
}

TEST(Elementwise, MinimumTieRoutesToFirst) {
  Tensor a = f64({1}, {2}).set_requires_grad(true);
  Tensor b = f64({1}, {2}).set_requires_grad(true);
  backward(sum(minimum(a, b)));
  EXPECT_EQ(a.grad_vector()[0], 1.0);
  EXPECT_EQ(b.grad_vector()[0], 0.0);
}

TEST(Unary, Definitions) {
  EXPECT_EQ(relu(f64({2}, {-1, 2})).to_vector(), (std::vector<double>{0, 2}));
  EXPECT_EQ(sigmoid(f64({1}, {0})).item(), 0.5);
  EXPECT_NEAR(gelu(f64({1}, {1})).item(), 0.5 * (1 + std::erf(1 / std::sqrt(2.0))), 1e-15);
}

TEST(Unary, GradientsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor x = away_from_zero({12}, 0.1, seed);
    for (auto [name, fn] : std::vector<std::pair<const char*, Tensor (*)(const Tensor&)>>{
             {"exp", &exp}, {"relu", &relu}, {"sigmoid", &sigmoid}, {"gelu", &gelu}}) {
      auto r = grad_check(name, [fn](const std::vector<Tensor>& in) { return fn(in[0]); }, {x}, {.seed = seed});
      EXPECT_TRUE(r.passed) << name << " " << r.max_relative_error;
    }
    Tensor p = f64({12}, away_from_zero({12}, 0.1, seed).to_vector());
    std::vector<double> pv = p.to_vector();
    for (auto& v : pv) v = std::abs(v) + 0.2;
    Tensor pos = f64({12}, pv).set_requires_grad(true);
    for (auto [name, fn] : std::vector<std::pair<const char*, Tensor (*)(const Tensor&)>>{{"log", &log}, {"sqrt", &sqrt}}) {
      auto r = grad_check(name, [fn](const std::vector<Tensor>& in) { return fn(in[0]); }, {pos}, {.seed = seed});
      EXPECT_TRUE(r.passed) << name << " " << r.max_relative_error;
    }
    auto r = grad_check("affine", [](const std::vector<Tensor>& in) { return affine(in[0], -1.5, 0.25); }, {x},
                        {.seed = seed});
    EXPECT_TRUE(r.passed);
  }
}

TEST(Unary, SigmoidChain) {
  auto r = grad_check("sigmoid-chain", [](const std::vector<Tensor>& in) { return sigmoid(sigmoid(in[0] * 3.0) * in[0]); },
                      std::vector<Shape>{{16}});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Unary, ReluKinkExcludedPasses) {
  auto r = grad_check("relu", [](const std::vector<Tensor>& in) { return relu(in[0]); },
                      {away_from_zero({20}, 0.1, 3)});
  EXPECT_TRUE(r.passed);
}

TEST(Matmul, IdentityAndHandValues) {
  Tensor m = create({3, 3}, init::Normal{0, 1, 2}, DType::f64);
  Tensor eye = f64({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(matmul(eye, m).to_vector(), m.to_vector());
  EXPECT_EQ(matmul(f64({2, 2}, {1, 2, 3, 4}), f64({2, 1}, {5, 6})).to_vector(), (std::vector<double>{17, 39}));
}

TEST(Matmul, MatchesTripleLoop) {
  Tensor a = create({5, 4}, init::Normal{0, 1, 3}, DType::f64).set_requires_grad(true);
  Tensor b = create({4, 3}, init::Normal{0, 1, 4}, DType::f64).set_requires_grad(true);
  EXPECT_LT(oracle::max_abs_diff(matmul(a, b).to_vector(), oracle::matmul(a.to_vector(), b.to_vector(), 5, 4, 3)), 1e-12);
  auto r = grad_check("matmul", [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); }, {a, b});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Matmul, BatchedMatchesPerSlice) {
  Tensor a = create({2, 3, 4}, init::Normal{0, 1, 5}, DType::f64);
  Tensor b = create({2, 4, 2}, init::Normal{0, 1, 6}, DType::f64);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (std::int64_t i = 0; i < 2; ++i) {
    auto ai = reshape(slice(a, 0, i, 1), {3, 4}).to_vector();
    auto bi = reshape(slice(b, 0, i, 1), {4, 2}).to_vector();
    auto ci = reshape(slice(c, 0, i, 1), {3, 2}).to_vector();
    EXPECT_LT(oracle::max_abs_diff(ci, oracle::matmul(ai, bi, 3, 4, 2)), 1e-12);
  }
  auto r = grad_check("matmul-batched", [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                      std::vector<Shape>{{2, 3, 4}, {2, 4, 2}});
  EXPECT_TRUE(r.passed);
}

TEST(Matmul, InnerMismatchThrows) { EXPECT_THROW(matmul(zeros({2, 3}), zeros({2, 3})), ShapeError); }

TEST(Reduce, HandValues) {
  EXPECT_EQ(sum(f64({3}, {1, 2, 3})).item(), 6.0);
  EXPECT_EQ(mean(full({2, 5}, 3.25, DType::f64)).item(), 3.25);
  EXPECT_EQ(max(f64({4}, {1, 7, 7, 2})).item(), 7.0);
  EXPECT_EQ(min(f64({4}, {1, -7, 7, 2})).item(), -7.0);
}

TEST(Reduce, ColumnSumMatchesLoop) {
  Tensor a = create({3, 4}, init::Normal{0, 1, 9}, DType::f64);
  auto v = a.to_vector();
  Tensor s = sum(a, {0});
  ASSERT_EQ(s.shape(), (Shape{4}));
  for (int j = 0; j < 4; ++j) EXPECT_EQ(s.to_vector()[j], v[j] + v[4 + j] + v[8 + j]);
}

TEST(Reduce, InvalidAxisThrows) {
  EXPECT_THROW(sum(zeros({2, 2}), {2}), AxisError);
  EXPECT_THROW(sum(zeros({2, 2}), {-3}), AxisError);
}

TEST(Reduce, MaxGradientGoesToFirstExtremum) {
  Tensor a = f64({4}, {1, 7, 7, 2}).set_requires_grad(true);
  backward(max(a));
  EXPECT_EQ(a.grad_vector(), (std::vector<double>{0, 1, 0, 0}));
}

TEST(Reduce, GradientsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = grad_check("sum/mean", [](const std::vector<Tensor>& in) {
      return concat({reshape(sum(in[0], {1}), {8}), reshape(mean(in[0], {0, 2}), {3})}, 0);
    }, std::vector<Shape>{{2, 3, 4}}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
    // Distinct values keep the arg-extremum away from ties.
    std::vector<double> v(12);
    Rng rng(seed);
    for (int i = 0; i < 12; ++i) v[i] = i * 0.1 + rng.uniform(0, 0.01);
    for (int i = 11; i > 0; --i) std::swap(v[i], v[rng.below(i + 1)]);
    auto rm = grad_check("max/min", [](const std::vector<Tensor>& in) {
      return concat({max(in[0], {1}), min(in[0], {0})}, 0);
    }, {f64({3, 4}, v).set_requires_grad(true)}, {.seed = seed});
    EXPECT_TRUE(rm.passed) << rm.max_relative_error;
  }
}

TEST(Softmax, UniformAndStability) {
  for (double v : softmax(f64({3}, {0, 0, 0}), 0).to_vector()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto big = softmax(from_values({2}, {1000, 0}), 0).to_vector();
  EXPECT_NEAR(big[0], 1.0, 1e-7);
  EXPECT_NEAR(big[1], 0.0, 1e-7);
  EXPECT_FALSE(std::isnan(big[0]));
}

TEST(Softmax, RowsSumToOne) {
  Tensor s = softmax(create({4, 7}, init::Normal{0, 3, 1}), 1);
  auto v = s.to_vector();
  for (int r = 0; r < 4; ++r) {
    double t = 0;
    for (int j = 0; j < 7; ++j) t += v[r * 7 + j];
    EXPECT_NEAR(t, 1.0, 1e-6);
  }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = grad_check("softmax", [](const std::vector<Tensor>& in) { return softmax(in[0], 0); },
                        std::vector<Shape>{{6}}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
    auto r2 = grad_check("softmax-axis0", [](const std::vector<Tensor>& in) { return softmax(in[0], 0); },
                         std::vector<Shape>{{3, 2, 2}}, {.seed = seed});
    EXPECT_TRUE(r2.passed);
  }
}

TEST(Layout, PermuteReshapeValues) {
  Tensor a = f64({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(permute(a, {1, 0}).to_vector(), (std::vector<double>{0, 3, 1, 4, 2, 5}));
  EXPECT_EQ(reshape(a, {3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(reshape(a, {4, 2}), ShapeError);
}

TEST(Layout, RollPadSliceConcat) {
  Tensor a = f64({4}, {0, 1, 2, 3});
  EXPECT_EQ(roll(a, 0, 1).to_vector(), (std::vector<double>{3, 0, 1, 2}));
  EXPECT_EQ(roll(a, 0, -1).to_vector(), (std::vector<double>{1, 2, 3, 0}));
  EXPECT_EQ(pad(a, 0, 1, 2).to_vector(), (std::vector<double>{0, 0, 1, 2, 3, 0, 0}));
  EXPECT_EQ(slice(a, 0, 1, 2).to_vector(), (std::vector<double>{1, 2}));
  EXPECT_EQ(concat({a, slice(a, 0, 0, 1)}, 0).to_vector(), (std::vector<double>{0, 1, 2, 3, 0}));
  EXPECT_THROW(slice(a, 0, 3, 2), ShapeError);
}

TEST(Layout, GatherAndRepeat) {
  Tensor t = f64({3, 2}, {0, 1, 10, 11, 20, 21});
  EXPECT_EQ(gather_rows(t, {2, 0, 2}).to_vector(), (std::vector<double>{20, 21, 0, 1, 20, 21}));
  EXPECT_THROW(gather_rows(t, {3}), ShapeError);
  EXPECT_EQ(repeat(f64({2}, {1, 2}), 2).to_vector(), (std::vector<double>{1, 2, 1, 2}));
}

TEST(Layout, GradientsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = grad_check("layout", [](const std::vector<Tensor>& in) {
      Tensor x = permute(in[0], {2, 0, 1});
      x = roll(pad(x, 1, 1, 2), 2, -1);
      x = concat({slice(x, 1, 1, 3), repeat(reshape(in[1], {5, 3}), 4)}, 1);
      return reshape(x, {-1});
    }, std::vector<Shape>{{5, 3, 4}, {15}}, {.seed = seed});
    EXPECT_TRUE(r.passed) << r.max_relative_error;
    auto g = grad_check("gather_rows", [](const std::vector<Tensor>& in) { return gather_rows(in[0], {1, 1, 0, 3}); },
                        std::vector<Shape>{{4, 3}}, {.seed = seed});
    EXPECT_TRUE(g.passed);
  }
}

TEST(Determinism, RepeatedForwardIsBitwiseEqual) {
  auto run = [] {
    Tensor a = create({16, 32}, init::Normal{0, 1, 1});
    Tensor b = create({32, 8}, init::Normal{0, 1, 2});
    return softmax(gelu(matmul(a, b)), 1).to_vector();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mdsvit
