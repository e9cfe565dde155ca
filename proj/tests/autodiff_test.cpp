#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "satt/optim.hpp"

using namespace satt;
using satt::testing::check_gradients;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = d(rng);
    return m;
}

void expect_grads_match(const std::function<Var()>& build, ParameterSet& params) {
    for (const auto& r : check_gradients(build, params))
        EXPECT_LT(r.rel_error, 1e-5) << r.name << " (|g|=" << r.analytic_norm << ")";
}

// Reduces any matrix to a scalar with a random linear functional, so that every
// output entry contributes a distinct weight to the gradient.
struct Probe {
    Var weights;
    explicit Probe(std::size_t r, std::size_t c, std::mt19937_64& rng)
        : weights(constant(random_matrix(r, c, rng))) {}
    Var operator()(const Var& x) const { return sum(hadamard(weights, x)); }
};

}  // namespace

TEST(Backward, SquareOfThreeHasGradientSix) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(3.0));
    const auto g = gradients(sum(hadamard(x, x)), p);
    EXPECT_EQ(g.at("x")(0, 0), 6.0);
}

TEST(Backward, LinearMapGradientIsTheCoefficient) {
    ParameterSet p;
    auto x = p.add("x", Matrix::from_rows({{1, -2}, {0.5, 4}}));
    const Matrix c = Matrix::from_rows({{3, 5}, {-7, 11}});
    const auto g = gradients(sum(hadamard(constant(c), x)), p);
    EXPECT_EQ(g.at("x"), c);
}

TEST(Backward, NonScalarLossIsAContractError) {
    auto x = leaf(Matrix(2, 2, 1.0));
    EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, UnreachableParameterGetsZero) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(2.0));
    p.add("unused", Matrix(2, 3, 1.0));
    const auto g = gradients(sum(square(x)), p);
    EXPECT_EQ(g.at("unused"), Matrix(2, 3));
}

TEST(Backward, SharedSubexpressionAccumulates) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(1.5));
    auto y = scale(x, 2.0);
    const auto g = gradients(sum(add(y, hadamard(y, y))), p);  // 2x + 4x^2
    EXPECT_DOUBLE_EQ(g.at("x")(0, 0), 2.0 + 8.0 * 1.5);
}

TEST(Backward, RepeatedBackwardDoesNotLeakInteriorGradients) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(2.0));
    auto loss = sum(square(scale(x, 3.0)));
    const auto g1 = gradients(loss, p);
    const auto g2 = gradients(loss, p);
    EXPECT_EQ(g1.at("x"), g2.at("x"));
}

TEST(NoGrad, GuardSuppressesGraph) {
    auto x = leaf(Matrix::scalar(1.0));
    {
        NoGradGuard guard;
        auto y = scale(x, 2.0);
        EXPECT_FALSE(y->requires_grad);
        EXPECT_TRUE(y->parents.empty());
    }
    EXPECT_TRUE(scale(x, 2.0)->requires_grad);
}

class OpGradient : public ::testing::Test {
protected:
    std::mt19937_64 rng{42};
    ParameterSet p;
};

TEST_F(OpGradient, Matmul) {
    auto a = p.add("a", random_matrix(3, 4, rng));
    auto b = p.add("b", random_matrix(4, 2, rng));
    Probe probe(3, 2, rng);
    expect_grads_match([&] { return probe(matmul(a, b)); }, p);
}

TEST_F(OpGradient, MatmulNtAndTranspose) {
    auto a = p.add("a", random_matrix(3, 4, rng));
    auto b = p.add("b", random_matrix(5, 4, rng));
    Probe probe(5, 3, rng);
    expect_grads_match([&] { return probe(transpose(matmul_nt(a, b))); }, p);
}

TEST_F(OpGradient, AddSubHadamardScale) {
    auto a = p.add("a", random_matrix(2, 3, rng));
    auto b = p.add("b", random_matrix(2, 3, rng));
    Probe probe(2, 3, rng);
    expect_grads_match([&] { return probe(scale(hadamard(add(a, b), sub(a, b)), 0.7)); }, p);
}

TEST_F(OpGradient, AddRowAndGelu) {
    auto a = p.add("a", random_matrix(4, 3, rng, 2.0));
    auto r = p.add("r", random_matrix(1, 3, rng));
    Probe probe(4, 3, rng);
    expect_grads_match([&] { return probe(gelu(add_row(a, r))); }, p);
}

TEST_F(OpGradient, SoftmaxRows) {
    auto a = p.add("a", random_matrix(3, 5, rng, 2.0));
    Probe probe(3, 5, rng);
    expect_grads_match([&] { return probe(softmax_rows(a)); }, p);
}

TEST_F(OpGradient, CausalSoftmax) {
    auto a = p.add("a", random_matrix(4, 4, rng));
    Probe probe(4, 4, rng);
    expect_grads_match([&] { return probe(softmax_rows(causal_mask(a))); }, p);
}

TEST_F(OpGradient, LayerNorm) {
    auto x = p.add("x", random_matrix(3, 5, rng));
    auto g = p.add("gain", random_matrix(1, 5, rng));
    auto b = p.add("bias", random_matrix(1, 5, rng));
    Probe probe(3, 5, rng);
    expect_grads_match([&] { return probe(layer_norm(x, g, b)); }, p);
}

TEST_F(OpGradient, ConcatReplaceSelect) {
    auto a = p.add("a", random_matrix(3, 2, rng));
    auto b = p.add("b", random_matrix(3, 3, rng));
    auto r = p.add("r", random_matrix(1, 5, rng));
    Probe probe(1, 5, rng);
    Probe probe2(3, 5, rng);
    expect_grads_match(
        [&] {
            auto cat = concat_cols({a, b});
            auto rep = replace_row(cat, 1, r);
            return add(probe(select_row(rep, 2)), probe2(rep));
        },
        p);
}

TEST_F(OpGradient, PoolingAndElement) {
    auto a = p.add("a", random_matrix(4, 3, rng));
    Probe probe(1, 3, rng);
    expect_grads_match(
        [&] { return add(add(probe(mean_rows(a)), probe(max_rows(a))), element(a, 2, 1)); }, p);
}

TEST_F(OpGradient, BceWithLogitsAndMean) {
    auto z = p.add("z", random_matrix(1, 1, rng, 3.0));
    auto w = p.add("w", random_matrix(1, 1, rng, 3.0));
    expect_grads_match([&] { return mean_of({bce_with_logits(z, 1.0), bce_with_logits(w, 0.0)}); }, p);
}

TEST(Bce, StableForLargeLogits) {
    auto big = constant(Matrix::scalar(800.0));
    EXPECT_NEAR(bce_with_logits(big, 1.0)->value[0], 0.0, 1e-300);
    EXPECT_NEAR(bce_with_logits(big, 0.0)->value[0], 800.0, 1e-9);
}

TEST(Determinism, IdenticalGraphsGiveBitwiseIdenticalGradients) {
    auto run = [] {
        std::mt19937_64 rng(9);
        ParameterSet p;
        auto a = p.add("a", random_matrix(6, 6, rng));
        auto loss = sum(softmax_rows(matmul(a, transpose(a))));
        return gradients(loss, p).at("a");
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ParameterSet p;
    auto x = p.add("x", Matrix::from_rows({{1.5, -2.0}}));
    Adam opt(p, {.learning_rate = 0.1});
    p.zero_grad();
    opt.step(p);
    EXPECT_EQ(x->value, Matrix::from_rows({{1.5, -2.0}}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(0.0));
    Adam opt(p, {.learning_rate = 0.1});
    p.zero_grad();
    x->grad[0] = 1.0;
    opt.step(p);
    // m_hat = 1, v_hat = 1, step = lr / (1 + eps).
    EXPECT_NEAR(x->value[0], -0.1, 1e-8);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    ParameterSet p;
    auto x = p.add("layer0.w", Matrix::scalar(0.0));
    Adam opt(p);
    p.zero_grad();
    x->grad[0] = std::nan("");
    try {
        opt.step(p);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer0.w"), std::string::npos);
    }
}

TEST(Adam, RateScaleAppliesByName) {
    ParameterSet p;
    auto a = p.add("a", Matrix::scalar(0.0));
    auto k = p.add("a.kernel", Matrix::scalar(0.0));
    Adam opt(p, {.learning_rate = 0.01});
    opt.set_rate_scale([](const std::string& n) { return n.ends_with(".kernel") ? 10.0 : 1.0; });
    p.zero_grad();
    a->grad[0] = k->grad[0] = 1.0;
    opt.step(p);
    EXPECT_NEAR(k->value[0] / a->value[0], 10.0, 1e-12);
}

TEST(Adam, IdenticalRunsAreBitwiseIdentical) {
    auto run = [] {
        std::mt19937_64 rng(5);
        ParameterSet p;
        auto w = p.add("w", random_matrix(3, 3, rng));
        const Matrix target = random_matrix(3, 3, rng);
        Adam opt(p, {.learning_rate = 0.05});
        for (int i = 0; i < 50; ++i) {
            p.zero_grad();
            backward(sum(square(sub(w, constant(target)))));
            opt.step(p);
        }
        return w->value;
    };
    EXPECT_EQ(run(), run());
}

TEST(Sgd, ClosedFormStep) {
    ParameterSet p;
    auto x = p.add("x", Matrix::scalar(3.0));
    Sgd opt(0.25);
    p.zero_grad();
    backward(sum(square(x)));
    opt.step(p);
    EXPECT_DOUBLE_EQ(x->value[0], 3.0 - 0.25 * 6.0);
}

TEST(ParameterSetTest, DuplicateNameRejected) {
    ParameterSet p;
    p.add("w", Matrix(1, 1));
    EXPECT_THROW(p.add("w", Matrix(1, 1)), ContractError);
}

TEST(ParameterSetTest, SnapshotRestoreRoundTrip) {
    ParameterSet p;
    auto w = p.add("w", Matrix::from_rows({{1, 2}}));
    const auto snap = p.snapshot();
    w->value[0] = 99;
    p.restore(snap);
    EXPECT_EQ(w->value, Matrix::from_rows({{1, 2}}));
}
