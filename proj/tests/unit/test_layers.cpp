#include "doctest.h"
#include <algorithm>

#include <cmath>
#include <cstdint>

#include "cade/nn/adadelta.hpp"
#include "cade/nn/augment.hpp"
#include "cade/nn/init.hpp"
#include "cade/nn/layers.hpp"
#include "cade/nn/loss.hpp"
#include "cade/rng.hpp"

using namespace cade;
using namespace cade::nn;

namespace {

TensorD random_tensor(Dims d, Rng& rng) {
  TensorD t(std::move(d));
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

// Direct loops, independent of the im2col path.
TensorD naive_conv(const TensorD& x, const TensorD& w, const TensorD& b, const ConvSpec& s) {
  const long pad = long(s.padding());
  const std::size_t ho = conv_output_extent(x.dim(1), s), wo = conv_output_extent(x.dim(2), s);
  TensorD out({s.out_channels, ho, wo});
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double acc = b[o];
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          for (std::size_t u = 0; u < s.kernel; ++u) {
            for (std::size_t v = 0; v < s.kernel; ++v) {
              const long yy = long(i * s.stride + u) - pad, xx = long(j * s.stride + v) - pad;
              if (yy < 0 || xx < 0 || yy >= long(x.dim(1)) || xx >= long(x.dim(2))) continue;
              acc += w[((o * s.in_channels + c) * s.kernel + u) * s.kernel + v] *
                     x[(c * x.dim(1) + std::size_t(yy)) * x.dim(2) + std::size_t(xx)];
            }
          }
        }
        out[(o * ho + i) * wo + j] = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv output extents follow the valid and same rules") {
  CHECK(conv_output_extent(96, ConvSpec{4, 32, 3, 1, PadMode::valid}) == 94);
  CHECK(conv_output_extent(96, ConvSpec{4, 32, 3, 1, PadMode::same}) == 96);
  CHECK(conv_output_extent(8, ConvSpec{1, 1, 5, 1, PadMode::valid}) == 4);
  CHECK_THROWS_AS(conv_output_extent(8, ConvSpec{1, 1, 3, 2, PadMode::valid}), SpecError);
  CHECK_THROWS_AS(conv_output_extent(2, ConvSpec{1, 1, 3, 1, PadMode::valid}), SpecError);
  CHECK_THROWS_AS(conv_output_extent(8, ConvSpec{1, 1, 4, 1, PadMode::same}), SpecError);
}

TEST_CASE("conv of ones with a ones kernel sums the window") {
  TensorF x({1, 3, 3}, 1.0f), w({1, 1, 3, 3}, 1.0f), b({1}, 0.0f);
  const TensorF y = conv2d(x, w, b, ConvSpec{1, 1, 3, 1, PadMode::valid});
  REQUIRE(y.dims() == Dims{1, 1, 1});
  CHECK(y[0] == 9.0f);
}

TEST_CASE("conv shapes of the first classifier and detector layers") {
  TensorF x({4, 96, 96}, 0.5f), w({32, 4, 3, 3}, 0.1f), b({32}, 0.0f);
  CHECK(conv2d(x, w, b, ConvSpec{4, 32, 3, 1, PadMode::valid}).dims() == Dims{32, 94, 94});
  CHECK(conv2d(x, w, b, ConvSpec{4, 32, 3, 1, PadMode::same}).dims() == Dims{32, 96, 96});
}

TEST_CASE("conv matches a direct loop implementation") {
  Rng rng(3);
  for (auto pad : {PadMode::valid, PadMode::same}) {
    for (std::size_t k : {1u, 3u, 5u}) {
      const ConvSpec s{3, 4, k, 1, pad};
      const TensorD x = random_tensor({3, 9, 8}, rng), w = random_tensor({4, 3, k, k}, rng),
                    b = random_tensor({4}, rng);
      const TensorD got = conv2d(x, w, b, s), want = naive_conv(x, w, b, s);
      REQUIRE(got.dims() == want.dims());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv is linear in its input without bias") {
  Rng rng(4);
  const ConvSpec s{2, 3, 3, 1, PadMode::same};
  const TensorD x = random_tensor({2, 6, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  const TensorD zero({3}, 0.0);
  TensorD scaled = x;
  for (auto& v : scaled.values()) v *= 2.5;
  const TensorD a = conv2d(scaled, w, zero, s), b = conv2d(x, w, zero, s);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(2.5 * b[i]).epsilon(1e-5));
}

TEST_CASE("conv rejects a channel mismatch") {
  TensorF x({3, 5, 5}), w({2, 4, 3, 3}), b({2});
  CHECK_THROWS_AS(conv2d(x, w, b, ConvSpec{4, 2, 3, 1, PadMode::valid}), ShapeError);
}

TEST_CASE("max pooling picks window maxima and drops odd trailing rows") {
  TensorF x({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const auto r = maxpool2x2(x);
  CHECK(r.output.dims() == Dims{1, 1, 1});
  CHECK(r.output[0] == 4.0f);
  CHECK(r.argmax[0] == 3);
  CHECK(maxpool2x2(TensorF({128, 17, 17})).output.dims() == Dims{128, 8, 8});
  CHECK_THROWS_AS(maxpool2x2(TensorF({1, 1, 4})), ShapeError);
}

TEST_CASE("max pooling of a constant image and of a shifted image") {
  Rng rng(5);
  TensorF c({2, 6, 6}, 3.25f);
  const TensorF pooled = maxpool2x2(c).output;
  for (float v : pooled.values()) CHECK(v == 3.25f);
  TensorF x({2, 7, 6});
  for (auto& v : x.values()) v = float(rng.normal());
  TensorF shifted = x;
  for (auto& v : shifted.values()) v += 2.0f;
  const auto a = maxpool2x2(x).output, b = maxpool2x2(shifted).output;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == a[i] + 2.0f);
}

TEST_CASE("max pooling backward routes gradients to the winners") {
  TensorF x({1, 2, 4}, std::vector<float>{1, 5, 2, 0, 3, 4, 7, 1});
  const auto r = maxpool2x2(x);
  const TensorF g = maxpool_backward(x.dims(), r.argmax, TensorF({1, 1, 2}, std::vector<float>{10, 20}));
  CHECK(g.storage() == AlignedVector<float>{0, 10, 0, 0, 0, 0, 20, 0});
}

TEST_CASE("dense layer arithmetic") {
  TensorF x({2}, std::vector<float>{1, 2});
  CHECK(dense(x, TensorF({2, 2}, std::vector<float>{1, 1, 0, 1}), TensorF({2}, 0.0f)).storage() ==
        AlignedVector<float>{3, 2});
  CHECK(dense(x, TensorF({2, 2}, std::vector<float>{1, 0, 0, 1}), TensorF({2}, 0.0f)).storage() ==
        AlignedVector<float>{1, 2});
  CHECK(dense(x, TensorF({3, 2}, 0.0f), TensorF({3}, std::vector<float>{4, 5, 6})).storage() ==
        AlignedVector<float>{4, 5, 6});
  CHECK_THROWS_AS(dense(x, TensorF({2, 3}), TensorF({2})), ShapeError);
}

TEST_CASE("activations") {
  TensorF x({4}, std::vector<float>{-2, 3, 0, -0.5f});
  CHECK(activate(x, ActivationKind::relu()).storage() == AlignedVector<float>{0, 3, 0, 0});
  const TensorF l = activate(x, ActivationKind::leaky_relu(0.2));
  CHECK(l[0] == doctest::Approx(-0.4));
  CHECK(l[1] == 3.0f);
  CHECK(activate(x, ActivationKind::leaky_relu(0.0)).storage() == activate(x, ActivationKind::relu()).storage());
  CHECK(activate(x, ActivationKind::identity()).storage() == x.storage());
  CHECK_THROWS_AS(ActivationKind::leaky_relu(1.0), ArgumentError);
  CHECK_THROWS_AS(ActivationKind::leaky_relu(-0.1), ArgumentError);
}

TEST_CASE("softmax is normalised, shift invariant and overflow safe") {
  const TensorD half = softmax(TensorD({2}, std::vector<double>{0, 0}));
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  const TensorD u = softmax(TensorD({5}, 7.0));
  for (double v : u.values()) CHECK(v == doctest::Approx(0.2));
  const TensorF big = softmax(TensorF({2}, std::vector<float>{1000, 0}));
  CHECK(std::isfinite(big[0]));
  const double oracle = 1.0 / (1.0 + std::exp(-1000.0));
  CHECK(big[0] == doctest::Approx(oracle));
  CHECK(big[1] >= 0.0f);
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    TensorD a({4});
    for (auto& v : a.values()) v = rng.normal(0, 5);
    TensorD b = a;
    const double c = rng.normal(0, 100);
    for (auto& v : b.values()) v += c;
    const TensorD sa = softmax(a), sb = softmax(b);
    double sum = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(sa[i] > 0.0);
      CHECK(sa[i] == doctest::Approx(sb[i]).epsilon(1e-6));
      sum += sa[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("binary cross-entropy values and gradient") {
  const auto one = binary_cross_entropy<double>(TensorD({1}, 0.5), std::vector<double>{1.0});
  CHECK(one.loss == doctest::Approx(std::log(2.0)));
  const auto two = binary_cross_entropy<double>(TensorD({2}, std::vector<double>{0.9, 0.2}), std::vector<double>{1, 0});
  CHECK(two.loss == doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2).epsilon(1e-12));
  CHECK(two.loss == doctest::Approx(0.1643).epsilon(1e-3));
  CHECK(two.gradient[0] == doctest::Approx((0.9 - 1) / (0.9 * 0.1) / 2));
  const auto sure = binary_cross_entropy<double>(TensorD({1}, 1.0 - 1e-7), std::vector<double>{1.0});
  CHECK(sure.loss == doctest::Approx(0.0).epsilon(1e-6));
  const auto clamped = binary_cross_entropy<double>(TensorD({1}, 0.0), std::vector<double>{1.0});
  CHECK(std::isfinite(clamped.loss));
  CHECK_THROWS(binary_cross_entropy<double>(TensorD({2}, 0.5), std::vector<double>{1.0}));
}

TEST_CASE("mean squared error over four coordinates") {
  CHECK(mse_loss(TensorD({1, 4}, 3.0), TensorD({1, 4}, 3.0)).loss == 0.0);
  CHECK(mse_loss(TensorD({1, 4}, 1.0), TensorD({1, 4}, 0.0)).loss == 1.0);
  const TensorD f({2, 4}, std::vector<double>{2, 0, 0, 0, 0, 0, 0, 2});
  const auto r = mse_loss(f, TensorD({2, 4}, 0.0));
  CHECK(r.loss == 1.0);
  CHECK(r.gradient[0] == doctest::Approx(2.0 / (2 * 2)));
  CHECK_THROWS_AS(mse_loss(TensorD({1, 4}), TensorD({2, 4})), ShapeError);
}

TEST_CASE("dropout: identity at p=0 and at inference, unbiased in expectation") {
  Rng rng(7);
  TensorF x({6}, std::vector<float>{1, -2, 3, 0.5f, 4, -1});
  const auto none = dropout(x, DropoutSpec{0.0}, rng, true);
  CHECK(none.output.storage() == x.storage());
  CHECK(std::all_of(none.mask.begin(), none.mask.end(), [](auto m) { return m == 1; }));
  const auto inference = dropout(x, DropoutSpec{0.7}, rng, false);
  CHECK(inference.output.storage() == x.storage());
  std::vector<double> mean(6, 0.0);
  for (int t = 0; t < 10000; ++t) {
    const auto r = dropout(x, DropoutSpec{0.5}, rng, true);
    for (std::size_t i = 0; i < 6; ++i) mean[i] += r.output[i] / 10000.0;
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(mean[i] - x[i]) <= 0.05 * std::abs(x[i]));
  CHECK_THROWS_AS((void)DropoutSpec(1.0), ArgumentError);
}

TEST_CASE("AdaDelta first step on a unit gradient") {
  std::vector<TensorD> params{TensorD({1}, 0.0)};
  AdaDeltaState<double> state(AdaDeltaConfig{}, params);
  adadelta_step(params, {TensorD({1}, 1.0)}, state);
  const double expected = -std::sqrt(1e-8) / std::sqrt(0.05 + 1e-8);
  CHECK(params[0][0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(params[0][0] - -4.472e-4) < 1e-7);
}

TEST_CASE("AdaDelta with zero gradient leaves parameters alone") {
  std::vector<TensorD> params{TensorD({3}, std::vector<double>{1, 2, 3})};
  AdaDeltaState<double> state(AdaDeltaConfig{}, params);
  adadelta_step(params, {TensorD({3}, std::vector<double>{1, -1, 2})}, state);
  const auto after_one = params[0];
  const double acc = state.mean_sq_grad[0][0];
  for (int i = 0; i < 5; ++i) adadelta_step(params, {TensorD({3}, 0.0)}, state);
  CHECK(params[0].storage() == after_one.storage());
  CHECK(state.mean_sq_grad[0][0] < acc);
  CHECK(state.mean_sq_grad[0][0] >= 0.0);
}

TEST_CASE("AdaDelta steps against the gradient sign and rejects non-finite gradients") {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const double g = rng.normal(0, 10);
    if (g == 0.0) continue;
    std::vector<TensorD> params{TensorD({1}, 0.0)};
    AdaDeltaState<double> state(AdaDeltaConfig{}, params);
    adadelta_step(params, {TensorD({1}, g)}, state);
    CHECK((params[0][0] < 0) == (g > 0));
  }
  std::vector<TensorD> params{TensorD({2}, 1.0)};
  AdaDeltaState<double> state(AdaDeltaConfig{}, params);
  CHECK_THROWS_AS(adadelta_step(params, {TensorD({2}, std::vector<double>{1, NAN})}, state), NumericError);
  CHECK(params[0][0] == 1.0);
  CHECK(state.mean_sq_grad[0][0] == 0.0);
}

TEST_CASE("AdaDelta descends a quadratic bowl monotonically") {
  std::vector<TensorD> p{TensorD({2}, std::vector<double>{3.0, -2.0})};
  AdaDeltaState<double> state(AdaDeltaConfig{}, p);
  const auto loss = [&] { return p[0][0] * p[0][0] + 4 * p[0][1] * p[0][1]; };
  double prev = loss();
  for (int i = 0; i < 100; ++i) {
    adadelta_step(p, {TensorD({2}, std::vector<double>{2 * p[0][0], 8 * p[0][1]})}, state);
    const double now = loss();
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("Glorot limits and determinism") {
  CHECK(glorot_limit(fans_of({2, 2})) == doctest::Approx(std::sqrt(1.5)));
  const Fans conv = fans_of({32, 4, 3, 3});
  CHECK(conv.fan_in == 36);
  CHECK(conv.fan_out == 288);
  CHECK(glorot_limit(conv) == doctest::Approx(std::sqrt(6.0 / 324.0)));
  CHECK(glorot_limit(conv) == doctest::Approx(0.1361).epsilon(1e-3));
  Rng a(9), b(9);
  const auto ta = glorot_uniform<float>({2, 2}, a), tb = glorot_uniform<float>({2, 2}, b);
  CHECK(ta.storage() == tb.storage());
  Rng c(10);
  const auto big = glorot_uniform<double>({64, 64}, c);
  const double lim = glorot_limit(fans_of({64, 64}));
  for (double v : big.values()) CHECK(std::abs(v) <= lim);
  CHECK_THROWS_AS(glorot_limit(Fans{0, 0}), ArgumentError);
}

TEST_CASE("flip augmentation maps image and box consistently") {
  TensorF img({1, 96, 96});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i % 97);
  const BoxF box{10, 20, 40, 30};
  const auto h = flip_augment(img, std::optional<BoxF>(box), FlipAxis::horizontal);
  REQUIRE(h.box);
  CHECK(*h.box == BoxF{46, 20, 40, 30});
  const auto v = flip_augment(img, std::optional<BoxF>(box), FlipAxis::vertical);
  CHECK(*v.box == BoxF{10, 46, 40, 30});
  for (auto axis : {FlipAxis::horizontal, FlipAxis::vertical}) {
    const auto once = flip_augment(img, std::optional<BoxF>(box), axis);
    const auto twice = flip_augment(once.image, once.box, axis);
    CHECK(twice.image.storage() == img.storage());
    CHECK(*twice.box == box);
  }
  CHECK_THROWS_AS(flip_augment(img, std::optional<BoxF>(BoxF{90, 0, 10, 10}), FlipAxis::horizontal), ArgumentError);
}

TEST_CASE("flipped box rasterizes to the flipped box mask") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const int w = 1 + int(rng.below(20)), h = 1 + int(rng.below(20));
    const BoundingBox b{int(rng.below(std::size_t(32 - w))), int(rng.below(std::size_t(24 - h))), w, h};
    const Mask m = rasterize_box(b, 24, 32);
    TensorF img({1, 24, 32});
    for (std::size_t i = 0; i < m.data.size(); ++i) img[i] = m.data[i];
    for (auto axis : {FlipAxis::horizontal, FlipAxis::vertical}) {
      const auto r = flip_augment(img, std::optional<BoxF>(BoxF::from(b)), axis);
      const BoundingBox fb{int(r.box->x_ul), int(r.box->y_ul), int(r.box->width), int(r.box->height)};
      const Mask fm = rasterize_box(fb, 24, 32);
      for (std::size_t i = 0; i < fm.data.size(); ++i) CHECK(float(fm.data[i]) == r.image[i]);
    }
  }
}

TEST_CASE("tensor storage is 64-byte aligned") {
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    const TensorF t({n}, 1.0f);
    CHECK(reinterpret_cast<std::uintptr_t>(t.data()) % 64 == 0);
    CHECK(reinterpret_cast<std::uintptr_t>(t.cast<double>().data()) % 64 == 0);
  }
  const TensorD m({3, 5}, 2.0);
  CHECK(reinterpret_cast<std::uintptr_t>(m.slab(1).data()) % 64 == 0);
}
