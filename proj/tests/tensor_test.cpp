#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "satt/tensor.hpp"

using satt::Matrix;
namespace raw = satt::raw;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Matrix m(r, c);
    for (double& v : m.data()) v = d(rng);
    return m;
}

}  // namespace

TEST(Matrix, RejectsMismatchedStorage) {
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), satt::ShapeError);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(raw::matmul(Matrix::identity(2), a), a);
}

TEST(Matmul, RowTimesColumn) {
    const Matrix r = raw::matmul(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}, {4}}));
    ASSERT_EQ(r.rows(), 1u);
    ASSERT_EQ(r.cols(), 1u);
    EXPECT_EQ(r(0, 0), 11.0);
}

TEST(Matmul, ZeroAnnihilates) {
    std::mt19937_64 rng(3);
    const Matrix z(3, 4);
    const Matrix r = raw::matmul(z, random_matrix(4, 5, rng));
    EXPECT_EQ(r, Matrix(3, 5));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        raw::matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL() << "expected ShapeError";
    } catch (const satt::ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos);
    }
}

TEST(Matmul, AssociativeOnRandomTriples) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix a = random_matrix(8, 8, rng), b = random_matrix(8, 8, rng), c = random_matrix(8, 8, rng);
        const Matrix left = raw::matmul(raw::matmul(a, b), c);
        const Matrix right = raw::matmul(a, raw::matmul(b, c));
        EXPECT_LT(raw::max_abs_diff(left, right), 1e-10);
    }
}

TEST(Matmul, TransposedVariantsAgree) {
    std::mt19937_64 rng(5);
    const Matrix a = random_matrix(4, 3, rng), b = random_matrix(5, 3, rng);
    EXPECT_LT(raw::max_abs_diff(raw::matmul_nt(a, b), raw::matmul(a, raw::transpose(b))), 1e-15);
    Matrix tn(3, 3);
    raw::matmul_tn_acc(a, a, tn);
    EXPECT_LT(raw::max_abs_diff(tn, raw::matmul(raw::transpose(a), a)), 1e-15);
}

TEST(Softmax, UniformRow) {
    const Matrix s = raw::softmax_rows(Matrix::from_rows({{0, 0, 0}}));
    for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoGivesOneThirdTwoThirds) {
    const Matrix s = raw::softmax_rows(Matrix::from_rows({{0, std::log(2.0)}}));
    EXPECT_NEAR(s(0, 0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(s(0, 1), 2.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const Matrix s = raw::softmax_rows(Matrix::from_rows({{1000, 1000}}));
    EXPECT_EQ(s(0, 0), 0.5);
    EXPECT_EQ(s(0, 1), 0.5);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix m = random_matrix(5, 7, rng);
        for (double& v : m.data()) v *= 10.0;
        const Matrix s = raw::softmax_rows(m);
        Matrix shifted = m;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double c = shift(rng);
            for (double& v : shifted.row(i)) v += c;
        }
        const Matrix s2 = raw::softmax_rows(shifted);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double sum = 0.0;
            for (double v : s.row(i)) sum += v;
            EXPECT_NEAR(sum, 1.0, 1e-12);
            // Order within the row is preserved.
            for (std::size_t j = 0; j + 1 < s.cols(); ++j)
                EXPECT_EQ(m(i, j) < m(i, j + 1), s(i, j) < s(i, j + 1));
        }
        EXPECT_LT(raw::max_abs_diff(s, s2), 1e-12);
    }
}

TEST(Hadamard, Identities) {
    const Matrix a = Matrix::from_rows({{2, 3}});
    EXPECT_EQ(raw::hadamard(a, Matrix(1, 2, 1.0)), a);
    EXPECT_EQ(raw::hadamard(a, Matrix(1, 2)), Matrix(1, 2));
    EXPECT_EQ(raw::hadamard(a, Matrix::from_rows({{4, 5}})), Matrix::from_rows({{8, 15}}));
    EXPECT_THROW(raw::hadamard(a, Matrix(2, 1)), satt::ShapeError);
    EXPECT_THROW(raw::add(a, Matrix(2, 1)), satt::ShapeError);
}
