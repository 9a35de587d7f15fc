#include <doctest.h>

#include <cmath>

#include "ddsr/gradcheck.hpp"
#include "ddsr/ops.hpp"
#include "ddsr/optim.hpp"

using namespace ddsr;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<T> v(static_cast<size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

// six nested loops, no shortcuts
template <typename T>
std::vector<T> conv2d_oracle(const std::vector<T>& x, int n, int ci, int h, int w,
                             const std::vector<T>& wt, int co, int kh, int kw,
                             const std::vector<T>* bias, int pad) {
    int ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
    std::vector<T> y(static_cast<size_t>(n) * co * ho * wo, T(0));
    for (int s = 0; s < n; ++s)
        for (int oc = 0; oc < co; ++oc)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias ? (*bias)[static_cast<size_t>(oc)] : 0.0;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                int sy = oy + ky - pad, sx = ox + kx - pad;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                                acc += static_cast<double>(
                                           x[((static_cast<size_t>(s) * ci + ic) * h + sy) * w +
                                             sx]) *
                                       wt[((static_cast<size_t>(oc) * ci + ic) * kh + ky) * kw +
                                          kx];
                            }
                    y[((static_cast<size_t>(s) * co + oc) * ho + oy) * wo + ox] =
                        static_cast<T>(acc);
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d box sum and identity") {
    auto x = Tensor<double>::filled({1, 1, 3, 3}, 1.0);
    auto w = Tensor<double>::filled({1, 1, 3, 3}, 1.0);
    auto b = Tensor<double>::zeros({1});
    auto y = conv2d(x, w, &b, 1);
    CHECK(y.data()[4] == doctest::Approx(9.0));
    CHECK(y.data()[0] == doctest::Approx(4.0));
    CHECK(y.data()[2] == doctest::Approx(4.0));

    auto id = Tensor<double>::filled({1, 1, 1, 1}, 1.0);
    auto y2 = conv2d(x, id, 0);
    CHECK(y2.data() == x.data());
}

TEST_CASE("conv2d matches the six-loop oracle") {
    Rng rng(42);
    auto x = random_tensor<double>({1, 2, 5, 5}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    for (int pad : {0, 1}) {
        auto y = conv2d(x, w, &b, pad);
        auto ref = conv2d_oracle(x.data(), 1, 2, 5, 5, w.data(), 3, 3, 3, &b.data(), pad);
        REQUIRE(y.data().size() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.data()[i] - ref[i]) < 1e-12);
    }
}

TEST_CASE("conv2d rejects bad inputs") {
    auto x = Tensor<float>::zeros({1, 2, 4, 4});
    auto w_badc = Tensor<float>::zeros({1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w_badc, 1), Error);
    auto w_even = Tensor<float>::zeros({1, 2, 2, 2});
    CHECK_THROWS_AS(conv2d(x, w_even, 1), Error);
    CHECK_NOTHROW(conv2d(x, w_even, 0));
}

TEST_CASE("linear identity, hand case, and oracle") {
    auto x = Tensor<double>::from({1, 2}, {1.0, 2.0});
    auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
    CHECK(linear(x, eye).data() == x.data());

    auto w3 = Tensor<double>::from({2, 2}, {3, 0, 0, 3});
    auto b = Tensor<double>::from({2}, {1, 1});
    auto y = linear(x, w3, &b);
    CHECK(y.data()[0] == doctest::Approx(4.0));
    CHECK(y.data()[1] == doctest::Approx(7.0));

    Rng rng(7);
    auto a = random_tensor<double>({4, 8}, rng);
    auto w = random_tensor<double>({8, 5}, rng);
    auto out = linear(a, w);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            double acc = 0;
            for (int k = 0; k < 8; ++k) acc += a.data()[i * 8 + k] * w.data()[k * 5 + j];
            CHECK(std::abs(out.data()[i * 5 + j] - acc) < 1e-12);
        }

    auto bad = Tensor<double>::zeros({3, 5});
    CHECK_THROWS_AS(linear(a, bad), Error);
}

TEST_CASE("layer_norm basics") {
    auto gamma = Tensor<double>::filled({3}, 1.0);
    auto beta = Tensor<double>::from({3}, {0.5, 0.5, 0.5});
    auto c = Tensor<double>::filled({1, 3}, 4.0);
    auto y = layer_norm(c, gamma, beta, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.5));

    auto two = Tensor<double>::from({1, 2}, {1.0, 3.0});
    auto g2 = Tensor<double>::filled({2}, 1.0);
    auto b2 = Tensor<double>::zeros({2});
    auto z = layer_norm(two, g2, b2, 1e-12);
    CHECK(z.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(z.data()[1] == doctest::Approx(1.0).epsilon(1e-5));

    Rng rng(3);
    auto x = random_tensor<double>({4, 16}, rng);
    auto g = Tensor<double>::filled({16}, 1.0);
    auto b = Tensor<double>::zeros({16});
    auto n = layer_norm(x, g, b, 1e-10);
    for (int r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (int j = 0; j < 16; ++j) mean += n.data()[r * 16 + j];
        mean /= 16;
        for (int j = 0; j < 16; ++j) {
            double d = n.data()[r * 16 + j] - mean;
            var += d * d;
        }
        var /= 16;
        CHECK(std::abs(mean) < 1e-7);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("softmax rows") {
    auto u = Tensor<double>::filled({2, 5}, 3.0);
    auto s = softmax_lastdim(u);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.2));

    auto x = Tensor<double>::from({1, 2}, {0.0, std::log(3.0)});
    auto y = softmax_lastdim(x);
    CHECK(y.data()[0] == doctest::Approx(0.25));
    CHECK(y.data()[1] == doctest::Approx(0.75));
}

TEST_CASE("pixel_shuffle bijection") {
    Rng rng(11);
    auto x = random_tensor<float>({2, 8, 3, 5}, rng);
    auto y = pixel_shuffle(x, 2);
    CHECK(y.shape() == Shape{2, 2, 6, 10});
    auto back = pixel_unshuffle(y, 2);
    CHECK(back.data() == x.data());

    auto bad = Tensor<float>::zeros({1, 6, 2, 2});
    CHECK_THROWS_AS(pixel_shuffle(bad, 2), Error);
}

TEST_CASE("pixel_shuffle layout") {
    // channel c*s*s + dy*s + dx lands at spatial offset (dy, dx)
    std::vector<float> v(4);
    for (int i = 0; i < 4; ++i) v[static_cast<size_t>(i)] = static_cast<float>(i);
    auto x = Tensor<float>::from({1, 4, 1, 1}, v);
    auto y = pixel_shuffle(x, 2);
    CHECK(y.data() == std::vector<float>{0, 1, 2, 3});
}

TEST_CASE("window partition and merge") {
    Rng rng(5);
    auto x = random_tensor<float>({1, 3, 8, 8}, rng);
    auto blocks = window_partition(x, 4);
    CHECK(blocks.shape() == Shape{4, 16, 3});
    auto merged = window_merge(blocks, 4, 1, 3, 8, 8);
    CHECK(merged.data() == x.data());

    auto one = random_tensor<float>({1, 2, 4, 4}, rng);
    CHECK(window_partition(one, 4).shape() == Shape{1, 16, 2});
}

TEST_CASE("reflect pad against direct copy") {
    auto x = Tensor<double>::from({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    auto p = reflect_pad2d(x, 1, 1);
    // rows: [1 2 3 2], [4 5 6 5], [1 2 3 2]
    std::vector<double> expect{1, 2, 3, 2, 4, 5, 6, 5, 1, 2, 3, 2};
    CHECK(p.data() == expect);
    CHECK_THROWS_AS(reflect_pad2d(x, 2, 0), Error);
}

TEST_CASE("adam closed forms") {
    ParamStore<float> ps;
    auto& p = ps.add("w", Tensor<float>::from({1}, {1.0f}));
    AdamState<float> st;

    SUBCASE("zero gradient leaves parameters unchanged") {
        p.grad_data().assign(1, 0.0f);
        adam_step(ps, st, 0.1f);
        CHECK(p.data()[0] == 1.0f);
        CHECK(st.step == 1);
    }

    SUBCASE("beta1=beta2=0 gives the signed step") {
        st.beta1 = 0;
        st.beta2 = 0;
        p.grad_data().assign(1, 1.0f);
        adam_step(ps, st, 0.1f);
        CHECK(p.data()[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-7));
    }

    SUBCASE("10 steps on x^2 shrink |x|, matching a reference implementation") {
        double b1 = st.beta1, b2 = st.beta2;
        double xr = 1.0, m = 0, v = 0;
        for (int t = 1; t <= 10; ++t) {
            float g = static_cast<float>(2.0 * p.data()[0]);
            p.grad_data().assign(1, g);
            adam_step(ps, st, 0.1f);
            double gr = 2.0 * xr;
            m = b1 * m + (1 - b1) * gr;
            v = b2 * v + (1 - b2) * gr * gr;
            double mh = m / (1 - std::pow(b1, t));
            double vh = v / (1 - std::pow(b2, t));
            xr -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(p.data()[0] == doctest::Approx(xr).epsilon(1e-4));
        }
        CHECK(std::abs(p.data()[0]) < 1.0);
    }

    SUBCASE("NaN gradient aborts naming the parameter") {
        p.grad_data().assign(1, std::numeric_limits<float>::quiet_NaN());
        try {
            adam_step(ps, st, 0.1f);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("'w'") != std::string::npos);
        }
    }
}

TEST_CASE("frozen parameters are skipped by adam") {
    ParamStore<float> ps;
    auto& a = ps.add("a", Tensor<float>::from({1}, {1.0f}));
    auto& b = ps.add("b", Tensor<float>::from({1}, {1.0f}));
    ps.set_frozen("b", true);
    a.grad_data().assign(1, 1.0f);
    b.grad_data().assign(1, 1.0f);
    AdamState<float> st;
    adam_step(ps, st, 0.5f);
    CHECK(a.data()[0] != 1.0f);
    CHECK(b.data()[0] == 1.0f);
}

TEST_CASE("gradient checks per op") {
    Rng rng(1234);

    SUBCASE("linear") {
        auto x = random_tensor<double>({3, 3}, rng);
        auto w = random_tensor<double>({3, 4}, rng);
        auto b = random_tensor<double>({4}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) { return linear(in[0], in[1], &in[2]); },
            {x, w, b});
        CHECK(r.max_rel_error < 1e-6);
    }
    SUBCASE("conv2d") {
        auto x = random_tensor<double>({1, 2, 4, 4}, rng);
        auto w = random_tensor<double>({3, 2, 3, 3}, rng);
        auto b = random_tensor<double>({3}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) { return conv2d(in[0], in[1], &in[2], 1); },
            {x, w, b});
        CHECK(r.max_rel_error < 1e-5);
    }
    SUBCASE("elementwise") {
        auto a = random_tensor<double>({2, 5}, rng);
        auto b = random_tensor<double>({2, 5}, rng);
        auto r1 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return mul(in[0], in[1]); }, {a, b});
        CHECK(r1.max_rel_error < 1e-6);
        auto r2 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return gelu(in[0]); }, {a});
        CHECK(r2.max_rel_error < 1e-6);
        auto r3 = grad_check(
            [](const std::vector<Tensor<double>>& in) {
                return add(mul_scalar(in[0], 0.7), add_scalar(in[1], 0.3));
            },
            {a, b});
        CHECK(r3.max_rel_error < 1e-6);
        auto r4 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return sub(in[0], in[1]); }, {a, b});
        CHECK(r4.max_rel_error < 1e-6);
    }
    SUBCASE("layer_norm") {
        auto x = random_tensor<double>({4, 6}, rng);
        auto g = random_tensor<double>({6}, rng, 0.5, 1.5);
        auto b = random_tensor<double>({6}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) {
                return layer_norm(in[0], in[1], in[2], 1e-5);
            },
            {x, g, b});
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("softmax") {
        auto x = random_tensor<double>({3, 7}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) { return softmax_lastdim(in[0]); }, {x});
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("bmm") {
        auto a = random_tensor<double>({2, 3, 4}, rng);
        auto b = random_tensor<double>({2, 4, 5}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) { return bmm(in[0], in[1]); }, {a, b});
        CHECK(r.max_rel_error < 1e-6);
        auto c = random_tensor<double>({2, 5, 4}, rng);
        auto r2 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return bmm_nt(in[0], in[1]); }, {a, c});
        CHECK(r2.max_rel_error < 1e-6);
    }
    SUBCASE("layout ops") {
        auto x = random_tensor<double>({1, 4, 3, 5}, rng);
        auto r1 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return pixel_shuffle(in[0], 2); }, {x});
        CHECK(r1.max_rel_error < 1e-6);
        auto r2 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return reflect_pad2d(in[0], 1, 2); },
            {x});
        CHECK(r2.max_rel_error < 1e-6);
        auto y = random_tensor<double>({1, 4, 8, 8}, rng);
        auto r3 = grad_check(
            [](const std::vector<Tensor<double>>& in) {
                return window_merge(window_partition(in[0], 4), 4, 1, 4, 8, 8);
            },
            {y});
        CHECK(r3.max_rel_error < 1e-6);
        auto a = random_tensor<double>({1, 2, 3, 3}, rng);
        auto b = random_tensor<double>({1, 3, 3, 3}, rng);
        auto r4 = grad_check(
            [](const std::vector<Tensor<double>>& in) {
                return slice_channels(concat_channels(in[0], in[1]), 1, 4);
            },
            {a, b});
        CHECK(r4.max_rel_error < 1e-6);
    }
    SUBCASE("reductions") {
        auto a = random_tensor<double>({3, 4}, rng);
        auto b = random_tensor<double>({3, 4}, rng);
        auto r = grad_check(
            [](const std::vector<Tensor<double>>& in) { return l1_mean(in[0], in[1]); }, {a, b});
        CHECK(r.max_rel_error < 1e-4);
        auto r2 = grad_check(
            [](const std::vector<Tensor<double>>& in) { return mean_all(in[0]); }, {a});
        CHECK(r2.max_rel_error < 1e-6);
    }
}

TEST_CASE("finite outputs on finite inputs") {
    Rng rng(9);
    auto x = random_tensor<float>({2, 3, 6, 6}, rng, -10.0, 10.0);
    auto w = random_tensor<float>({4, 3, 3, 3}, rng, -2.0, 2.0);
    auto y = gelu(conv2d(x, w, 1));
    check_finite(y, "conv+gelu");
    auto s = softmax_lastdim(random_tensor<float>({4, 32}, rng, -50.0, 50.0));
    check_finite(s, "softmax");
}

TEST_CASE("backward accumulates across reuse") {
    // y = x*x + x: dy/dx = 2x + 1
    auto x = Tensor<double>::from({3}, {0.5, -1.0, 2.0}, true);
    auto y = sum_all(add(mul(x, x), x));
    y.backward();
    REQUIRE(x.has_grad());
    for (int i = 0; i < 3; ++i)
        CHECK(x.grad()[static_cast<size_t>(i)] ==
              doctest::Approx(2 * x.data()[static_cast<size_t>(i)] + 1));
}
