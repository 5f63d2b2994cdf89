#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mssp/layers.hpp"
#include "oracles.hpp"

namespace mssp::layers {
namespace {

using oracle::central_difference;
using oracle::rel_error;
using oracle::weighted_sum;

constexpr double kStep = 1e-3;
constexpr double kTol = 1e-4;

std::mt19937_64 rng_for(std::uint64_t seed) { return std::mt19937_64(seed); }

// Checks every entry of `analytic` against central differences of `objective`
// with respect to the matching entry of `wrt`.
template <typename Objective>
void expect_gradient(Tensord& wrt, const Tensord& analytic, Objective&& objective,
                     const std::function<bool(std::size_t)>& skip = {}) {
  ASSERT_EQ(wrt.dims(), analytic.dims());
  std::size_t checked = 0;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (skip && skip(i)) continue;
    const double numeric = central_difference(objective, wrt[i], kStep);
    EXPECT_LT(rel_error(analytic[i], numeric), kTol) << "entry " << i << ": analytic " << analytic[i]
                                                     << " numeric " << numeric;
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

// ---- conv2d ----------------------------------------------------------------

TEST(Conv2d, AllOnesThreeByThree) {
  Tensorf in({3, 3, 1}, 1.0f), w({3, 3, 1, 1}, 1.0f), b({1}, 0.0f);
  const Tensorf out = conv2d_forward(in, w, b, 1, 1);
  ASSERT_EQ(out.dims(), (Dims{3, 3, 1}));
  EXPECT_EQ(out.at(1, 1, 0), 9.0f);
  EXPECT_EQ(out.at(0, 1, 0), 6.0f);
  EXPECT_EQ(out.at(1, 0, 0), 6.0f);
  EXPECT_EQ(out.at(2, 1, 0), 6.0f);
  EXPECT_EQ(out.at(0, 0, 0), 4.0f);
  EXPECT_EQ(out.at(2, 2, 0), 4.0f);
}

TEST(Conv2d, PointwiseIdentityKernel) {
  auto rng = rng_for(1);
  const Tensorf in = oracle::random_tensor<float>({5, 7, 4}, rng);
  Tensorf w({1, 1, 4, 4}, 0.0f), b({4}, 0.0f);
  for (std::size_t c = 0; c < 4; ++c) w.at(0, 0, c, c) = 1.0f;
  EXPECT_EQ(conv2d_forward(in, w, b, 1, 0), in);
}

TEST(Conv2d, FirstTrunkLayerExtent) {
  Tensorf in({32, 32, 3}), w({3, 3, 3, 32}), b({32});
  EXPECT_EQ(conv2d_forward(in, w, b, 1, 1).dims(), (Dims{32, 32, 32}));
}

TEST(Conv2d, ShapeErrors) {
  Tensorf in({8, 8, 3}), w({3, 3, 4, 2}), b({2});
  EXPECT_THROW(conv2d_forward(in, w, b, 1, 1), ShapeError);  // channel mismatch
  Tensorf w2({3, 3, 3, 2});
  EXPECT_THROW(conv2d_forward(in, w2, b, 2, 0), ShapeError);  // (8 − 3) / 2 not integral
  Tensorf bad_bias({3});
  EXPECT_THROW(conv2d_forward(in, w2, bad_bias, 1, 1), ShapeError);
}

TEST(Conv2d, MatchesNestedLoopOracleExactlyOnRepresentableValues) {
  auto rng = rng_for(2);
  std::uniform_int_distribution<std::size_t> extent(1, 8), chans(1, 4), outs(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = extent(rng), w = extent(rng), c = chans(rng), o = outs(rng);
    const std::size_t k = (trial % 2 == 0 || h < 3 || w < 3) ? 1 : 3;
    const std::size_t pad = k == 3 ? 1 : 0;
    const Tensorf in = oracle::random_integer_tensor({h, w, c}, rng);
    const Tensorf wt = oracle::random_integer_tensor({k, k, c, o}, rng);
    const Tensorf b = oracle::random_integer_tensor({o}, rng);
    EXPECT_EQ(conv2d_forward(in, wt, b, 1, pad), oracle::naive_conv2d(in, wt, b, 1, pad)) << "trial " << trial;
  }
}

TEST(Conv2d, MatchesNestedLoopOracleOnRandomReals) {
  auto rng = rng_for(3);
  const Tensord in = oracle::random_tensor<double>({6, 5, 3}, rng);
  const Tensord w = oracle::random_tensor<double>({3, 3, 3, 4}, rng);
  const Tensord b = oracle::random_tensor<double>({4}, rng);
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t pad = stride == 1 ? 1 : 0;
    if (stride == 2) {
      const Tensord in2 = oracle::random_tensor<double>({7, 5, 3}, rng);
      const Tensord got = conv2d_forward(in2, w, b, 2, 0), want = oracle::naive_conv2d(in2, w, b, 2, 0);
      ASSERT_EQ(got.dims(), want.dims());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
      continue;
    }
    const Tensord got = conv2d_forward(in, w, b, stride, pad), want = oracle::naive_conv2d(in, w, b, stride, pad);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, ScalarBackwardIsProductRule) {
  Tensorf x({1, 1, 1}, 3.0f), w({1, 1, 1, 1}, -2.0f), b({1}, 0.0f), dy({1, 1, 1}, 1.0f);
  const auto g = conv2d_backward(x, w, dy, 1, 0);
  EXPECT_EQ(g.d_input[0], -2.0f);
  EXPECT_EQ(g.d_params.at("weight")[0], 3.0f);
  EXPECT_EQ(g.d_params.at("bias")[0], 1.0f);
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  auto rng = rng_for(4);
  const Tensorf x = oracle::random_tensor<float>({4, 4, 2}, rng), w = oracle::random_tensor<float>({3, 3, 2, 3}, rng);
  const auto g = conv2d_backward(x, w, Tensorf({4, 4, 3}), 1, 1);
  for (float v : g.d_input.data()) EXPECT_EQ(v, 0.0f);
  for (const auto& [name, t] : g.d_params) {
    for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
  }
}

TEST(Conv2d, BiasGradientSumsUpstream) {
  auto rng = rng_for(5);
  const Tensord x = oracle::random_tensor<double>({2, 4, 4, 2}, rng), w = oracle::random_tensor<double>({3, 3, 2, 3}, rng);
  const Tensord dy = oracle::random_tensor<double>({2, 4, 4, 3}, rng);
  const auto g = conv2d_backward(x, w, dy, 1, 1);
  for (std::size_t o = 0; o < 3; ++o) {
    double s = 0.0;
    for (std::size_t p = 0; p < 32; ++p) s += dy[p * 3 + o];
    EXPECT_NEAR(g.d_params.at("bias")[o], s, 1e-12);
  }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  auto rng = rng_for(6);
  Tensord x = oracle::random_tensor<double>({5, 5, 2}, rng);
  Tensord w = oracle::random_tensor<double>({3, 3, 2, 4}, rng);
  Tensord b = oracle::random_tensor<double>({4}, rng);
  const Tensord r = oracle::random_tensor<double>({5, 5, 4}, rng);
  const auto g = conv2d_backward(x, w, r, 1, 1);
  auto objective = [&] { return weighted_sum(conv2d_forward(x, w, b, 1, 1), r); };
  expect_gradient(x, g.d_input, objective);
  expect_gradient(w, g.d_params.at("weight"), objective);
  expect_gradient(b, g.d_params.at("bias"), objective);
}

TEST(Conv2d, BackwardShapeError) {
  Tensorf x({4, 4, 2}), w({3, 3, 2, 3});
  EXPECT_THROW(conv2d_backward(x, w, Tensorf({4, 4, 2}), 1, 1), ShapeError);
}

// ---- batch norm ------------------------------------------------------------

RunningStats<double> fresh_stats(std::size_t c) { return {Tensord({c}, 0.0), Tensord({c}, 1.0)}; }

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
  Tensorf in({2, 3, 3, 2}, 4.0f);
  const auto r = batchnorm_forward(in, Tensorf({2}, 1.0f), Tensorf({2}, 0.0f),
                                   RunningStats<float>{Tensorf({2}), Tensorf({2}, 1.0f)}, Mode::train, 0.1f, 1e-5f);
  for (float v : r.output.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNorm, ShiftSetsChannelMean) {
  auto rng = rng_for(7);
  const Tensord in = oracle::random_tensor<double>({3, 4, 4, 2}, rng, -3.0, 5.0);
  const auto r = batchnorm_forward(in, Tensord({2}, 1.0), Tensord({2}, 5.0), fresh_stats(2), Mode::train, 0.1, 1e-5);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (std::size_t p = 0; p < 48; ++p) mean += r.output[p * 2 + c];
    EXPECT_NEAR(mean / 48.0, 5.0, 1e-5);
  }
}

TEST(BatchNorm, OutputMomentsFollowGammaAndBeta) {
  auto rng = rng_for(8);
  const Tensorf in = oracle::random_tensor<float>({4, 8, 8, 3}, rng, -2.0, 6.0);
  const Tensorf gamma({3}, std::vector<float>{0.5f, 2.0f, 1.5f});
  const Tensorf beta({3}, std::vector<float>{-1.0f, 0.0f, 3.0f});
  const auto r = batchnorm_forward(in, gamma, beta, RunningStats<float>{Tensorf({3}), Tensorf({3}, 1.0f)},
                                   Mode::train, 0.1f, 1e-5f);
  const std::size_t n = 4 * 8 * 8;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += r.output[p * 3 + c];
    mean /= n;
    for (std::size_t p = 0; p < n; ++p) sq += std::pow(r.output[p * 3 + c] - mean, 2);
    EXPECT_NEAR(mean, beta[c], 1e-3);
    EXPECT_NEAR(std::sqrt(sq / n), gamma[c], 1e-3);
  }
}

TEST(BatchNorm, RunningStatsFollowExponentialAverage) {
  auto rng = rng_for(9);
  const Tensord in = oracle::random_tensor<double>({2, 2, 2, 1}, rng);
  double mean = 0.0, var = 0.0;
  for (double v : in.data()) mean += v / 8.0;
  for (double v : in.data()) var += (v - mean) * (v - mean) / 8.0;
  const auto r = batchnorm_forward(in, Tensord({1}, 1.0), Tensord({1}, 0.0), fresh_stats(1), Mode::train, 0.25, 1e-5);
  EXPECT_NEAR(r.running.mean[0], 0.25 * mean, 1e-12);
  EXPECT_NEAR(r.running.var[0], 0.75 + 0.25 * var, 1e-12);
  const auto e = batchnorm_forward(in, Tensord({1}, 1.0), Tensord({1}, 0.0), fresh_stats(1), Mode::eval, 0.25, 1e-5);
  EXPECT_EQ(e.running.mean, fresh_stats(1).mean);
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  Tensord in({1, 1, 2, 1}, std::vector<double>{3.0, 5.0});
  RunningStats<double> stats{Tensord({1}, 1.0), Tensord({1}, 4.0)};
  const auto r = batchnorm_forward(in, Tensord({1}, 2.0), Tensord({1}, 1.0), stats, Mode::eval, 0.1, 1e-12);
  EXPECT_NEAR(r.output[0], 2.0 * (3.0 - 1.0) / 2.0 + 1.0, 1e-9);
  EXPECT_NEAR(r.output[1], 2.0 * (5.0 - 1.0) / 2.0 + 1.0, 1e-9);
}

TEST(BatchNorm, TrainModeNeedsTwoValues) {
  Tensorf in({1, 1, 1, 2});
  EXPECT_THROW(batchnorm_forward(in, Tensorf({2}, 1.0f), Tensorf({2}), RunningStats<float>{Tensorf({2}), Tensorf({2})},
                                 Mode::train, 0.1f, 1e-5f),
               ShapeError);
}

TEST(BatchNorm, ZeroUpstreamGivesZeroGradients) {
  auto rng = rng_for(10);
  const Tensord in = oracle::random_tensor<double>({2, 3, 3, 2}, rng);
  const auto r = batchnorm_forward(in, Tensord({2}, 1.3), Tensord({2}, 0.2), fresh_stats(2), Mode::train, 0.1, 1e-5);
  const auto g = batchnorm_backward(r.cache, Tensord(in.dims()));
  for (double v : g.d_input.data()) EXPECT_EQ(v, 0.0);
  for (const auto& [name, t] : g.d_params) {
    for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(BatchNorm, GammaGradientIsUpstreamDotNormalized) {
  auto rng = rng_for(11);
  const Tensord in = oracle::random_tensor<double>({2, 3, 3, 2}, rng);
  const Tensord dy = oracle::random_tensor<double>({2, 3, 3, 2}, rng);
  const auto r = batchnorm_forward(in, Tensord({2}, 0.7), Tensord({2}, 0.0), fresh_stats(2), Mode::train, 0.1, 1e-5);
  const auto g = batchnorm_backward(r.cache, dy);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < 18; ++p) s += dy[p * 2 + c] * r.cache.normalized[p * 2 + c];
    EXPECT_NEAR(g.d_params.at("gamma")[c], s, 1e-12);
  }
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  auto rng = rng_for(12);
  Tensord x = oracle::random_tensor<double>({3, 3, 3, 2}, rng, -2.0, 2.0);
  Tensord gamma = oracle::random_tensor<double>({2}, rng, 0.5, 1.5);
  Tensord beta = oracle::random_tensor<double>({2}, rng);
  const Tensord r = oracle::random_tensor<double>(x.dims(), rng);
  const auto stats = fresh_stats(2);
  const auto fwd = batchnorm_forward(x, gamma, beta, stats, Mode::train, 0.1, 1e-5);
  const auto g = batchnorm_backward(fwd.cache, r);
  auto objective = [&] {
    return weighted_sum(batchnorm_forward(x, gamma, beta, stats, Mode::train, 0.1, 1e-5).output, r);
  };
  expect_gradient(x, g.d_input, objective);
  expect_gradient(gamma, g.d_params.at("gamma"), objective);
  expect_gradient(beta, g.d_params.at("beta"), objective);
}

TEST(BatchNorm, BackwardShapeMismatch) {
  const auto fwd = batchnorm_forward(Tensorf({2, 2, 2, 1}, 1.0f), Tensorf({1}, 1.0f), Tensorf({1}),
                                     RunningStats<float>{Tensorf({1}), Tensorf({1}, 1.0f)}, Mode::train, 0.1f, 1e-5f);
  EXPECT_THROW(batchnorm_backward(fwd.cache, Tensorf({2, 2, 1, 1})), ShapeError);
}

// ---- relu ------------------------------------------------------------------

TEST(Relu, ClampsNegatives) {
  const Tensorf in({3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  EXPECT_EQ(relu_forward(in), Tensorf({3}, std::vector<float>{0.0f, 0.0f, 2.0f}));
  const Tensorf pos({2}, std::vector<float>{0.5f, 3.0f});
  EXPECT_EQ(relu_forward(pos), pos);
}

TEST(Relu, BackwardMatchesFiniteDifferencesAwayFromKink) {
  auto rng = rng_for(13);
  Tensord x = oracle::random_tensor<double>({4, 4, 3}, rng);
  const Tensord r = oracle::random_tensor<double>(x.dims(), rng);
  const Tensord dx = relu_backward(x, r);
  const Tensord x0 = x;
  expect_gradient(x, dx, [&] { return weighted_sum(relu_forward(x), r); },
                  [&](std::size_t i) { return std::abs(x0[i]) < 1e-3; });
}

// ---- max pool --------------------------------------------------------------

TEST(MaxPool, PicksWindowMaximum) {
  const Tensorf in({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  const auto r = maxpool_forward(in, 2, 2);
  EXPECT_EQ(r.output.dims(), (Dims{1, 1, 1}));
  EXPECT_EQ(r.output[0], 4.0f);
  const Tensorf c({4, 4, 2}, 2.5f);
  const auto pooled = maxpool_forward(c, 2, 2);
  for (float v : pooled.output.data()) EXPECT_EQ(v, 2.5f);
}

TEST(MaxPool, TiesResolveToFirstRowMajor) {
  const Tensorf in({2, 2, 1}, std::vector<float>{1, 5, 5, 5});
  EXPECT_EQ(maxpool_forward(in, 2, 2).cache.argmax[0], 1u);
}

TEST(MaxPool, TrunkExtentAndShapeErrors) {
  EXPECT_EQ(maxpool_forward(Tensorf({32, 32, 128}), 2, 2).output.dims(), (Dims{16, 16, 128}));
  EXPECT_THROW(maxpool_forward(Tensorf({5, 4, 1}), 2, 2), ShapeError);
  EXPECT_THROW(maxpool_forward(Tensorf({4, 4, 1}), 2, 1), ShapeError);
}

TEST(MaxPool, BackwardRoutesToArgmax) {
  const Tensorf in({2, 2, 1}, std::vector<float>{1, 7, 3, 4});
  const auto r = maxpool_forward(in, 2, 2);
  const Tensorf dx = maxpool_backward(r.cache, Tensorf({1, 1, 1}, 2.5f));
  EXPECT_EQ(dx, Tensorf({2, 2, 1}, std::vector<float>{0, 2.5f, 0, 0}));
  const Tensorf zero = maxpool_backward(r.cache, Tensorf({1, 1, 1}));
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(maxpool_backward(r.cache, Tensorf({2, 1, 1})), ShapeError);
}

TEST(MaxPool, BackwardMatchesFiniteDifferencesAwayFromTies) {
  auto rng = rng_for(14);
  Tensord x = oracle::random_tensor<double>({2, 4, 4, 3}, rng);
  const Tensord r = oracle::random_tensor<double>({2, 2, 2, 3}, rng);
  const auto fwd = maxpool_forward(x, 2, 2);
  const Tensord dx = maxpool_backward(fwd.cache, r);
  // Skip entries in windows whose top two values are within 1e-3.
  std::vector<bool> near_tie(x.size(), false);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t oy = 0; oy < 2; ++oy)
      for (std::size_t ox = 0; ox < 2; ++ox)
        for (std::size_t c = 0; c < 3; ++c) {
          std::vector<std::pair<double, std::size_t>> v;
          for (std::size_t ky = 0; ky < 2; ++ky)
            for (std::size_t kx = 0; kx < 2; ++kx) {
              const std::size_t i = ((n * 4 + oy * 2 + ky) * 4 + ox * 2 + kx) * 3 + c;
              v.emplace_back(x[i], i);
            }
          std::sort(v.rbegin(), v.rend());
          if (v[0].first - v[1].first < 1e-3) {
            for (auto& e : v) near_tie[e.second] = true;
          }
        }
  expect_gradient(x, dx, [&] { return weighted_sum(maxpool_forward(x, 2, 2).output, r); },
                  [&](std::size_t i) { return near_tie[i]; });
}

// ---- average pool ----------------------------------------------------------

TEST(AvgPool, ConstantInputStaysConstant) {
  const Tensorf in({8, 8, 3}, -1.25f);
  for (std::size_t k : {1u, 2u, 4u, 8u}) {
    const Tensorf out = avgpool_forward(in, k);
    for (float v : out.data()) EXPECT_EQ(v, -1.25f);
  }
}

TEST(AvgPool, GlobalPoolIsChannelMean) {
  auto rng = rng_for(15);
  const Tensord in = oracle::random_tensor<double>({16, 16, 128}, rng);
  const Tensord out = avgpool_forward(in, 16);
  ASSERT_EQ(out.dims(), (Dims{1, 1, 128}));
  for (std::size_t c = 0; c < 128; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < 256; ++p) s += in[p * 128 + c];
    EXPECT_NEAR(out[c], s / 256.0, 1e-12);
  }
}

TEST(AvgPool, ShapeErrorAndBackwardFiniteDifferences) {
  EXPECT_THROW(avgpool_forward(Tensorf({6, 6, 1}), 4), ShapeError);
  auto rng = rng_for(16);
  Tensord x = oracle::random_tensor<double>({2, 8, 8, 2}, rng);
  const Tensord r = oracle::random_tensor<double>({2, 2, 2, 2}, rng);
  const Tensord dx = avgpool_backward(r, 4);
  ASSERT_EQ(dx.dims(), x.dims());
  expect_gradient(x, dx, [&] { return weighted_sum(avgpool_forward(x, 4), r); });
}

// ---- transposed convolution ------------------------------------------------

TEST(Deconv2d, SinglePixelScatter) {
  const Tensorf in({1, 1, 1}, 3.5f);
  const Tensorf out = deconv2d_forward(in, Tensorf({2, 2, 1, 1}, 1.0f), Tensorf({1}), 2);
  EXPECT_EQ(out, Tensorf({2, 2, 1}, 3.5f));
}

TEST(Deconv2d, BranchExtentAndErrors) {
  EXPECT_EQ(deconv2d_forward(Tensorf({8, 8, 32}), Tensorf({2, 2, 32, 32}), Tensorf({32}), 2).dims(),
            (Dims{16, 16, 32}));
  EXPECT_THROW(deconv2d_forward(Tensorf({8, 8, 16}), Tensorf({2, 2, 32, 32}), Tensorf({32}), 2), ShapeError);
  EXPECT_THROW(deconv2d_forward(Tensorf({8, 8, 32}), Tensorf({3, 3, 32, 32}), Tensorf({32}), 2), ShapeError);
}

TEST(Deconv2d, BackwardMatchesFiniteDifferences) {
  auto rng = rng_for(17);
  Tensord x = oracle::random_tensor<double>({2, 2, 3}, rng);
  Tensord w = oracle::random_tensor<double>({4, 4, 3, 2}, rng);
  Tensord b = oracle::random_tensor<double>({2}, rng);
  const Tensord r = oracle::random_tensor<double>({8, 8, 2}, rng);
  const auto g = deconv2d_backward(x, w, r, 4);
  auto objective = [&] { return weighted_sum(deconv2d_forward(x, w, b, 4), r); };
  expect_gradient(x, g.d_input, objective);
  expect_gradient(w, g.d_params.at("weight"), objective);
  expect_gradient(b, g.d_params.at("bias"), objective);
}

// ---- concat ----------------------------------------------------------------

TEST(Concat, BranchesPlusSkipGive256Channels) {
  Tensorf b({16, 16, 32}), skip({16, 16, 128});
  EXPECT_EQ(concat_channels<float>({&b, &b, &b, &b, &skip}).dims(), (Dims{16, 16, 256}));
}

TEST(Concat, SingleInputIsIdentityAndSplitInverts) {
  auto rng = rng_for(18);
  const Tensorf a = oracle::random_tensor<float>({2, 3, 3, 2}, rng);
  const Tensorf b = oracle::random_tensor<float>({2, 3, 3, 5}, rng);
  EXPECT_EQ(concat_channels<float>({&a}), a);
  const Tensorf cat = concat_channels<float>({&a, &b});
  EXPECT_EQ(cat.at(1, 2, 0, 1), a.at(1, 2, 0, 1));
  EXPECT_EQ(cat.at(1, 2, 0, 4), b.at(1, 2, 0, 2));
  const auto parts = split_channels(cat, {2, 5});
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0], a);
  EXPECT_EQ(parts[1], b);
}

TEST(Concat, SpatialMismatch) {
  Tensorf a({4, 4, 2}), b({4, 5, 2});
  EXPECT_THROW(concat_channels<float>({&a, &b}), ShapeError);
  EXPECT_THROW(split_channels(a, {1, 2}), ShapeError);
}

// ---- softmax cross-entropy -------------------------------------------------

TEST(SoftmaxXent, UniformLogitsGiveLn2) {
  const auto r = softmax_xent(Tensorf({3, 3, 2}, 0.7f), Tensorf({3, 3}, 1.0f));
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-7);
}

TEST(SoftmaxXent, LargeMarginSaturates) {
  Tensorf logits({4, 4, 2}), labels({4, 4});
  for (std::size_t p = 0; p < 16; ++p) {
    labels[p] = static_cast<float>(p % 2);
    logits[2 * p + (p % 2)] = 20.0f;
  }
  const auto r = softmax_xent(logits, labels);
  EXPECT_LT(r.loss, 1e-6);
  EXPECT_GE(r.loss, 0.0);
}

TEST(SoftmaxXent, ProbabilitiesSumToOneEvenForHugeLogits) {
  auto rng = rng_for(19);
  Tensorf logits = oracle::random_tensor<float>({8, 8, 2}, rng, -500.0, 500.0);
  const Tensorf p1 = softmax_positive(logits);
  for (float& v : logits.data()) v = -v;  // swapping the sign swaps the classes
  const Tensorf p0 = softmax_positive(logits);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_TRUE(std::isfinite(p1[i]));
    EXPECT_NEAR(p0[i] + p1[i], 1.0, 1e-6);
  }
}

TEST(SoftmaxXent, RejectsNonBinaryLabelsAndWrongChannels) {
  Tensorf labels({2, 2}, 0.0f);
  labels[3] = 2.0f;
  EXPECT_THROW(softmax_xent(Tensorf({2, 2, 2}), labels), DomainError);
  EXPECT_THROW(softmax_xent(Tensorf({2, 2, 3}), Tensorf({2, 2})), ShapeError);
}

TEST(SoftmaxXent, GradientMatchesFiniteDifferences) {
  auto rng = rng_for(20);
  Tensord logits = oracle::random_tensor<double>({2, 3, 3, 2}, rng, -3.0, 3.0);
  Tensord labels({2, 3, 3});
  std::bernoulli_distribution coin(0.4);
  for (double& v : labels.data()) v = coin(rng) ? 1.0 : 0.0;
  const auto r = softmax_xent(logits, labels);
  expect_gradient(logits, r.d_logits, [&] { return softmax_xent(logits, labels).loss; });
}

// ---- property: forward extents ---------------------------------------------

TEST(Properties, ForwardExtentsFollowClosedForms) {
  auto rng = rng_for(21);
  std::uniform_int_distribution<std::size_t> small(1, 4), chan(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = small(rng), k = std::size_t{1} << (small(rng) - 1), c = chan(rng);
    const std::size_t h = k * small(rng), w = k * small(rng);
    const Tensorf x({n, h, w, c}, 1.0f);
    EXPECT_EQ(avgpool_forward(x, k).dims(), (Dims{n, h / k, w / k, c}));
    EXPECT_EQ(maxpool_forward(x, k, k).output.dims(), (Dims{n, h / k, w / k, c}));
    EXPECT_EQ(avgpool_backward(avgpool_forward(x, k), k).dims(), x.dims());
    const auto mp = maxpool_forward(x, k, k);
    EXPECT_EQ(maxpool_backward(mp.cache, mp.output).dims(), x.dims());
    const std::size_t o = chan(rng);
    EXPECT_EQ(deconv2d_forward(x, Tensorf({k, k, c, o}), Tensorf({o}), k).dims(), (Dims{n, h * k, w * k, o}));
    const std::size_t kc = (h >= 3 && w >= 3) ? 3 : 1, pad = trial % 3;
    EXPECT_EQ(conv2d_forward(x, Tensorf({kc, kc, c, o}), Tensorf({o}), 1, pad).dims(),
              (Dims{n, h + 2 * pad - kc + 1, w + 2 * pad - kc + 1, o}));
  }
}

}  // namespace
}  // namespace mssp::layers
