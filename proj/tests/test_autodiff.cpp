#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ruledist/ad.hpp"
#include "support/fd_check.hpp"

using namespace ruledist;
using ad::make_tensor;
using ad::Mask;
using ad::Tape;
using ad::TensorPtr;

namespace {

TensorPtr<double> random_input(std::vector<int> shape, Rng& rng, double lo = -1.0,
                               double hi = 1.0, bool requires_grad = true) {
    auto t = make_tensor<double>(std::move(shape), requires_grad);
    for (auto& v : *t->values) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("masked_softmax spec example") {
    Tape<float> tape(false);
    auto x = make_tensor<float>({1, 3}, {1.0f, 1.0f, 1.0f});
    auto p = tape.masked_softmax(x, Mask{1, 0, 1});
    CHECK((*p->values)[0] == doctest::Approx(0.5));
    CHECK((*p->values)[1] == 0.0f);
    CHECK((*p->values)[2] == doctest::Approx(0.5));
}

TEST_CASE("tanh, layer_norm and matmul identities") {
    Tape<float> tape(false);
    auto x = make_tensor<float>({1, 4}, {0.0f, 0.0f, 0.0f, 0.0f});
    auto y = tape.tanh(x);
    for (const float v : *y->values) CHECK(v == 0.0f);

    auto row = make_tensor<float>({1, 8});
    std::fill(row->values->begin(), row->values->end(), 2.5f);
    auto gain = make_tensor<float>({8});
    std::fill(gain->values->begin(), gain->values->end(), 1.0f);
    auto bias = make_tensor<float>({8});
    auto ln = tape.layer_norm(row, gain, bias);
    for (const float v : *ln->values) CHECK(v == doctest::Approx(0.0f));

    auto eye = make_tensor<float>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto m = make_tensor<float>({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto prod = tape.matmul(eye, m);
    CHECK(*prod->values == *m->values);
}

TEST_CASE("backward basics: sum and mean(tanh)") {
    Tape<double> tape(true);
    auto x = make_tensor<double>({3}, {0.3, -0.7, 1.2}, true);
    auto s = tape.sum(x);
    tape.backward(s);
    for (const double g : x->grad) CHECK(g == doctest::Approx(1.0));

    Tape<double> tape2(true);
    auto z = make_tensor<double>({4}, {0.0, 0.0, 0.0, 0.0}, true);
    auto loss = tape2.mean(tape2.tanh(z));
    tape2.backward(loss);
    for (const double g : z->grad) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("repeated backward accumulates leaf gradients") {
    Tape<double> tape(true);
    auto x = make_tensor<double>({3}, {1.0, 2.0, 3.0}, true);
    auto loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK(x->grad[1] == doctest::Approx(4.0));
    tape.backward(loss);
    CHECK(x->grad[1] == doctest::Approx(8.0));
}

TEST_CASE("backward requires a scalar loss") {
    Tape<double> tape(true);
    auto x = make_tensor<double>({2, 2}, {1, 2, 3, 4}, true);
    auto y = tape.tanh(x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("shape errors carry both shapes") {
    Tape<float> tape(false);
    auto a = make_tensor<float>({2, 3});
    auto b = make_tensor<float>({2, 3});
    try {
        tape.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find("[2x3]") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.mul(a, make_tensor<float>({3, 2})), ShapeError);
    CHECK_THROWS_AS(tape.add(a, make_tensor<float>({2, 2})), ShapeError);
}

TEST_CASE("every primitive passes central finite differences") {
    Rng rng(404);
    for (int seed = 0; seed < 10; ++seed) {
        // matmul + add broadcast + tanh composed
        {
            auto a = random_input({3, 4}, rng);
            auto b = random_input({4, 5}, rng);
            auto bias = random_input({5}, rng);
            auto report = fd::check_gradients({a, b, bias}, [&](Tape<double>& t) {
                return t.sum(t.tanh(t.add(t.matmul(a, b), bias)));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // matmul_nt
        {
            auto a = random_input({2, 6}, rng);
            auto b = random_input({5, 6}, rng);
            auto report = fd::check_gradients({a, b}, [&](Tape<double>& t) {
                return t.mean(t.matmul_nt(a, b));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // mul, scale, relu away from the kink
        {
            auto a = random_input({3, 3}, rng, 0.1, 1.0);
            auto b = random_input({3, 3}, rng, -1.0, -0.1);
            auto report = fd::check_gradients({a, b}, [&](Tape<double>& t) {
                return t.sum(t.relu(t.scale(t.mul(a, b), 1.7)));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // log on positive values
        {
            auto a = random_input({2, 4}, rng, 0.2, 2.0);
            auto report = fd::check_gradients(
                {a}, [&](Tape<double>& t) { return t.mean(t.log(a)); });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // concat on both axes + gather + select
        {
            auto a = random_input({2, 3}, rng);
            auto b = random_input({1, 3}, rng);
            auto c = random_input({3, 2}, rng);
            auto report = fd::check_gradients({a, b, c}, [&](Tape<double>& t) {
                std::vector<TensorPtr<double>> rows{a, b};
                auto stacked = t.concat(std::span<const TensorPtr<double>>(rows), 0);  // [3x3]
                std::vector<TensorPtr<double>> cols{stacked, c};
                auto wide = t.concat(std::span<const TensorPtr<double>>(cols), 1);  // [3x5]
                auto picked = t.gather(wide, {2, 0, 2});
                return t.add(t.sum(picked), t.select(wide, 7));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // layer_norm with learnable gain/bias
        {
            auto x = random_input({3, 6}, rng);
            auto gain = random_input({6}, rng, 0.5, 1.5);
            auto bias = random_input({6}, rng);
            auto w = random_input({6}, rng, -1.0, 1.0, false);
            auto report = fd::check_gradients({x, gain, bias}, [&](Tape<double>& t) {
                return t.sum(t.mul(t.layer_norm(x, gain, bias),
                                   t.add(t.layer_norm(x, gain, bias), w)));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // masked_softmax + mask_fill + masked_entropy
        {
            auto x = random_input({2, 5}, rng, -2.0, 2.0);
            auto w = random_input({2, 5}, rng);
            const Mask mask{1, 0, 1, 1, 0};
            auto report = fd::check_gradients({x, w}, [&](Tape<double>& t) {
                auto filled = t.mask_fill(x, mask, ad::kMaskValue);
                auto p = t.masked_softmax(filled, mask);
                return t.add(t.sum(t.mul(p, w)), t.masked_entropy(p, mask));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
        // fused multi-head attention
        {
            auto q = random_input({3, 8}, rng);
            auto k = random_input({4, 8}, rng);
            auto v = random_input({4, 8}, rng);
            auto w = random_input({3, 8}, rng, -1.0, 1.0, false);
            const Mask mask{1, 1, 0, 1};
            auto report = fd::check_gradients({q, k, v}, [&](Tape<double>& t) {
                return t.sum(t.mul(t.multi_head_attention(q, k, v, mask, 2), w));
            });
            CHECK_MESSAGE(report.ok(), report.first_failure);
        }
    }
}

TEST_CASE("masked softmax distribution properties") {
    Rng rng(777);
    for (int trial = 0; trial < 50; ++trial) {
        const int cols = 2 + static_cast<int>(rng.next_below(12));
        auto x = random_input({1, cols}, rng, -30.0, 30.0);
        Mask mask(static_cast<std::size_t>(cols));
        int unmasked = 0;
        for (auto& m : mask) {
            m = rng.next_below(2);
            unmasked += m;
        }
        if (unmasked == 0) mask[static_cast<std::size_t>(rng.next_below(cols))] = 1;

        Tape<double> tape(true);
        auto p = tape.masked_softmax(x, mask);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double v = (*p->values)[static_cast<std::size_t>(c)];
            if (!mask[static_cast<std::size_t>(c)]) CHECK(v == 0.0);
            CHECK(std::isfinite(v));
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

        auto h = tape.masked_entropy(p, mask);
        tape.backward(h);
        for (const double g : x->grad) CHECK(std::isfinite(g));
    }
}

TEST_CASE("xavier uniform bounds and determinism") {
    auto t = ad::xavier_uniform_init<float>({3, 3}, 3, 3, 11);
    for (const float v : *t->values) CHECK(std::abs(v) <= 1.0f);

    auto u = ad::xavier_uniform_init<float>({64, 64}, 64, 64, 12);
    const float bound = std::sqrt(6.0f / 128.0f);
    for (const float v : *u->values) CHECK(std::abs(v) <= bound);

    auto again = ad::xavier_uniform_init<float>({64, 64}, 64, 64, 12);
    CHECK(*u->values == *again->values);
    CHECK_THROWS_AS(ad::xavier_uniform_init<float>({2, 2}, 0, 4, 1), ContractError);
}

TEST_CASE("adam: zero gradient leaves everything untouched") {
    auto p = make_tensor<float>({4}, {1, 2, 3, 4}, true);
    p->ensure_grad();
    std::vector<TensorPtr<float>> params{p};
    ad::AdamState<float> state;
    state.init(std::span<const TensorPtr<float>>(params));
    ad::adam_step(std::span<const TensorPtr<float>>(params), state, 0.001);
    CHECK((*p->values)[2] == 3.0f);
    for (const float m : state.m[0]) CHECK(m == 0.0f);
}

TEST_CASE("adam: first step moves by about -lr against a unit gradient") {
    auto p = make_tensor<float>({1}, {0.5f}, true);
    p->grad = {1.0f};
    std::vector<TensorPtr<float>> params{p};
    ad::AdamState<float> state;
    state.init(std::span<const TensorPtr<float>>(params));
    ad::adam_step(std::span<const TensorPtr<float>>(params), state, 0.001);
    CHECK((*p->values)[0] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam: constant gradient drives the parameter against its sign") {
    auto p = make_tensor<float>({1}, {0.0f}, true);
    std::vector<TensorPtr<float>> params{p};
    ad::AdamState<float> state;
    state.init(std::span<const TensorPtr<float>>(params));
    for (int i = 0; i < 50; ++i) {
        p->grad = {-2.5f};
        ad::adam_step(std::span<const TensorPtr<float>>(params), state, 0.01);
    }
    CHECK((*p->values)[0] > 0.0f);
}

TEST_CASE("adam rejects mismatched state") {
    auto p = make_tensor<float>({4}, true);
    auto q = make_tensor<float>({4}, true);
    std::vector<TensorPtr<float>> both{p, q};
    std::vector<TensorPtr<float>> one{p};
    ad::AdamState<float> state;
    state.init(std::span<const TensorPtr<float>>(both));
    CHECK_THROWS_AS(
        ad::adam_step(std::span<const TensorPtr<float>>(one), state, 0.001), ShapeError);
}

TEST_CASE("clip_global_norm") {
    auto a = make_tensor<float>({2}, {0.3f, 0.4f}, true);
    a->grad = {0.3f, 0.4f};  // norm 0.5
    std::vector<TensorPtr<float>> params{a};
    const double before = ad::clip_global_norm(std::span<const TensorPtr<float>>(params), 1.0);
    CHECK(before == doctest::Approx(0.5));
    CHECK(a->grad[0] == 0.3f);  // unchanged below the limit

    a->grad = {3.0f, 4.0f};  // norm 5
    const double pre = ad::clip_global_norm(std::span<const TensorPtr<float>>(params), 1.0);
    CHECK(pre == doctest::Approx(5.0));
    CHECK(a->grad[0] == doctest::Approx(0.6f));
    CHECK(a->grad[1] == doctest::Approx(0.8f));

    auto z = make_tensor<float>({3}, true);
    z->ensure_grad();
    std::vector<TensorPtr<float>> zp{z};
    ad::clip_global_norm(std::span<const TensorPtr<float>>(zp), 1.0);
    for (const float g : z->grad) CHECK(g == 0.0f);
}

TEST_CASE("clip never increases the global norm") {
    Rng rng(31415);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = make_tensor<float>({7}, true);
        a->ensure_grad();
        for (auto& g : a->grad) g = static_cast<float>(rng.uniform(-3.0, 3.0));
        std::vector<TensorPtr<float>> params{a};
        double norm_before = 0.0;
        for (const float g : a->grad) norm_before += static_cast<double>(g) * g;
        norm_before = std::sqrt(norm_before);
        ad::clip_global_norm(std::span<const TensorPtr<float>>(params), 1.0);
        double norm_after = 0.0;
        for (const float g : a->grad) norm_after += static_cast<double>(g) * g;
        norm_after = std::sqrt(norm_after);
        CHECK(norm_after <= norm_before + 1e-6);
        CHECK(norm_after <= 1.0 + 1e-6);
    }
}

TEST_CASE("forward and backward stay finite on a random op soup") {
    Rng rng(999);
    for (int trial = 0; trial < 30; ++trial) {
        Tape<double> tape(true);
        auto x = random_input({4, 6}, rng, -3.0, 3.0);
        auto w = random_input({6, 6}, rng, -1.0, 1.0);
        Mask col_mask{1, 1, 1, 0, 1, 0};
        Mask key_mask{1, 1, 0, 1};  // over h's rows
        auto h = tape.tanh(tape.matmul(x, w));
        auto p = tape.masked_softmax(h, col_mask);
        auto att = tape.multi_head_attention(h, h, h, key_mask, 3);
        auto loss = tape.add(tape.mean(att), tape.masked_entropy(p, col_mask));
        tape.backward(loss);
        CHECK(std::isfinite((*loss->values)[0]));
        for (const double g : x->grad) CHECK(std::isfinite(g));
        for (const double g : w->grad) CHECK(std::isfinite(g));
    }
}
