#include "skelrnn/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace skelrnn;

namespace {

Matrix identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-2.0, 2.0);
  return m;
}

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// matvec
// ---------------------------------------------------------------------------

TEST(Matvec, IdentityPassesThrough) {
  Vector v{1.0, 2.0, 3.0};
  EXPECT_EQ(matvec(identity(3), v), v);
}

TEST(Matvec, ZeroMatrixAnnihilates) {
  Matrix z(2, 3);
  Vector v{5.0, -1.0, 2.5};
  Vector y = matvec(z, v);
  EXPECT_EQ(y, (Vector{0.0, 0.0}));
}

TEST(Matvec, HandExpandedTwoByTwo) {
  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(0, 1) = 2.0;
  m(1, 0) = 3.0;
  m(1, 1) = 4.0;
  Vector y = matvec(m, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 7.0);
}

TEST(Matvec, DimensionMismatchNamesBothShapes) {
  Matrix m(2, 3);
  try {
    matvec(m, {1.0, 2.0});
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2"), std::string::npos) << msg;
  }
}

TEST(Matvec, TransposedAgreesWithExplicitTranspose) {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix m = random_matrix(32, 32, rng);
    Vector v = random_vector(32, rng);
    Vector a = matvec_transposed(m, v);
    Vector b = matvec(transpose(m), v);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Matvec, AddOuterMatchesElementwise) {
  Rng rng(11);
  Matrix m = random_matrix(4, 3, rng);
  Matrix before = m;
  Vector a = random_vector(4, rng);
  Vector b = random_vector(3, rng);
  add_outer(m, a, b);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(m(r, c), before(r, c) + a[r] * b[c], 1e-15);
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

TEST(Nonlinearity, SigmoidAtZero) { EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5); }

TEST(Nonlinearity, TanhAtZero) { EXPECT_DOUBLE_EQ(std::tanh(0.0), 0.0); }

TEST(Nonlinearity, SigmoidReflection) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    double x = rng.uniform(-20.0, 20.0);
    EXPECT_NEAR(sigmoid(-x), 1.0 - sigmoid(x), 1e-12);
  }
}

TEST(Nonlinearity, CodomainHoldsForExtremeFiniteInputs) {
  Vector v{-1e308, -1e3, -1.0, 0.0, 1.0, 1e3, 1e308};
  Vector s = sigmoid(v);
  Vector t = tanh(v);
  for (double x : s) {
    EXPECT_TRUE(std::isfinite(x));
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  for (double x : t) {
    EXPECT_TRUE(std::isfinite(x));
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
}

// ---------------------------------------------------------------------------
// softmax / cross_entropy
// ---------------------------------------------------------------------------

TEST(Softmax, UniformOnEqualInputs) {
  Vector y = softmax({0.0, 0.0, 0.0});
  for (double p : y) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Vector v = random_vector(8, rng);
    Vector y = softmax(v);
    double sum = 0.0;
    for (double p : y) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);

    double c = rng.uniform(-100.0, 100.0);
    Vector shifted = v;
    for (double& x : shifted) x += c;
    Vector ys = softmax(shifted);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(ys[i], y[i], 1e-12);
  }
}

TEST(Softmax, HandEvaluatedLogInputs) {
  Vector y = softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
  EXPECT_NEAR(y[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(y[2], 3.0 / 6.0, 1e-12);
}

TEST(CrossEntropy, CertainCorrectIsZero) {
  EXPECT_DOUBLE_EQ(cross_entropy({1.0, 0.0, 0.0}, 0), 0.0);
}

TEST(CrossEntropy, UniformIsLogK) {
  for (int k = 2; k <= 10; ++k) {
    Vector u(k, 1.0 / k);
    EXPECT_NEAR(cross_entropy(u, k / 2), std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(CrossEntropy, HandEvaluated) {
  EXPECT_NEAR(cross_entropy({0.5, 0.25, 0.25}, 1), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ZeroProbabilityIsClamped) {
  double loss = cross_entropy({1.0, 0.0}, 1);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -std::log(1e-30), 1e-9);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  EXPECT_THROW(cross_entropy({0.5, 0.5}, 2), DimensionError);
  EXPECT_THROW(cross_entropy({0.5, 0.5}, -1), DimensionError);
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

TEST(RngStream, SameSeedSameDraws) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(43);
  EXPECT_NE(c.next_u64(), d.next_u64());
}

TEST(RngStream, UniformInUnitInterval) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(RngStream, IntegerRangeIsHalfOpen) {
  Rng rng(9);
  bool saw_lo = false;
  for (int i = 0; i < 10000; ++i) {
    std::int64_t x = rng.uniform_int(3, 7);
    EXPECT_GE(x, 3);
    EXPECT_LT(x, 7);
    if (x == 3) saw_lo = true;
  }
  EXPECT_TRUE(saw_lo);
  EXPECT_EQ(rng.uniform_int(5, 6), 5);  // singleton range
  EXPECT_THROW(rng.uniform_int(5, 5), DimensionError);
}

TEST(RngStream, ChildStreamsAreStable) {
  Rng a = Rng::child(100, 0);
  Rng b = Rng::child(100, 0);
  Rng c = Rng::child(100, 1);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(a.next_u64(), c.next_u64());
}

TEST(RngStream, NormalsAreFiniteAndCentered) {
  Rng rng(77);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    ASSERT_TRUE(std::isfinite(z));
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

TEST(VectorHelpers, ConcatAndSlice) {
  Vector a{1, 2}, b{3}, c{4, 5, 6};
  Vector all = concat({a, b, c});
  EXPECT_EQ(all, (Vector{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(slice(all, 2, 3), (Vector{3, 4, 5}));
  EXPECT_THROW(slice(all, 4, 3), DimensionError);
}
