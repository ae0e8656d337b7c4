#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace maxrobust;
using testutil::Rng;
using testutil::rel_err;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Spectrum single(Complex c) {
  Spectrum s{ComplexVector::Constant(1, c), true};
  return s;
}

// Hermitian spectrum of length d with random content.
Spectrum random_spectrum(Rng& rng, Eigen::Index d) { return dft(rng.vec(d)); }

}  // namespace

TEST(Norms, LpExamples) {
  const Vector v = vec2(3, -4);
  EXPECT_DOUBLE_EQ(norm(v, NormKind::L2), 5.0);
  EXPECT_DOUBLE_EQ(norm(v, NormKind::L1), 7.0);
  EXPECT_DOUBLE_EQ(norm(v, NormKind::Linf), 4.0);
}

TEST(Norms, FourierL1OfConstantPair) {
  EXPECT_NEAR(norm(vec2(1, 1), NormKind::FourierL1), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(norm(vec2(1, 1), NormKind::FourierL1), testutil::reference_fourier_l1(vec2(1, 1)), 1e-15);
}

TEST(Norms, FourierNormsMatchReferenceDft) {
  Rng rng(11);
  for (Eigen::Index d : {2, 3, 5, 8, 12, 64, 100, 101}) {
    const Vector v = rng.vec(d);
    EXPECT_LT(rel_err(norm(v, NormKind::FourierL1), testutil::reference_fourier_l1(v)), 1e-12) << d;
    EXPECT_LT(rel_err(norm(v, NormKind::FourierLinf), testutil::reference_fourier_linf(v)), 1e-12) << d;
  }
}

TEST(Norms, ZeroIffZero) {
  for (NormKind k : kAllNorms) {
    EXPECT_EQ(norm(Vector::Zero(5), k), 0.0);
    Vector e = Vector::Zero(5);
    e[3] = 1e-300;
    EXPECT_GT(norm(e, k), 0.0) << to_string(k);
  }
}

TEST(Norms, RejectsNonFiniteAndEmpty) {
  Vector v = vec2(1, std::numeric_limits<double>::quiet_NaN());
  for (NormKind k : kAllNorms) {
    EXPECT_THROW(norm(v, k), InvalidArgument);
    EXPECT_THROW(norm(Vector(), k), InvalidArgument);
  }
  v[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(norm(v, NormKind::L2), InvalidArgument);
}

TEST(Norms, DualTable) {
  EXPECT_EQ(dual(NormKind::L1), NormKind::Linf);
  EXPECT_EQ(dual(NormKind::Linf), NormKind::L1);
  EXPECT_EQ(dual(NormKind::L2), NormKind::L2);
  EXPECT_EQ(dual(NormKind::FourierLinf), NormKind::FourierL1);
  EXPECT_EQ(dual(NormKind::FourierL1), NormKind::FourierLinf);
  for (NormKind k : kAllNorms) EXPECT_EQ(dual(dual(k)), k);
}

TEST(Norms, ParseRoundTrip) {
  for (NormKind k : kAllNorms) EXPECT_EQ(parse_norm_kind(to_string(k)), k);
  EXPECT_THROW(parse_norm_kind("l3"), InvalidArgument);
}

// Hölder tightness: the witness lies in the unit ball and attains the dual norm.
TEST(Norms, HolderTightnessProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = rng.integer(1, 40);
    const Vector w = rng.vec(d);
    for (NormKind k : kAllNorms) {
      const Vector delta = dual_witness(w, k);
      EXPECT_LE(norm(delta, k), 1.0 + 1e-12) << to_string(k) << " d=" << d;
      EXPECT_LT(rel_err(w.dot(delta), norm(w, dual(k))), 1e-9) << to_string(k) << " d=" << d;
    }
  }
}

TEST(Norms, HolderTightnessWithTies) {
  Vector w(4);
  w << 2, -2, 1, 2;
  for (NormKind k : kAllNorms) EXPECT_LT(rel_err(w.dot(dual_witness(w, k)), norm(w, dual(k))), 1e-12);
  const Vector d1 = dual_witness(w, NormKind::L1);
  EXPECT_EQ(d1[0], 1.0);  // lowest index among the ties
}

// No vector in the unit ball beats the witness (sampled check).
TEST(Norms, WitnessBeatsRandomBallPoints) {
  Rng rng(9);
  for (NormKind k : kAllNorms) {
    const Vector w = rng.vec(6);
    const double best = w.dot(dual_witness(w, k));
    for (int s = 0; s < 2000; ++s) {
      Vector u = rng.vec(6);
      u /= norm(u, k);
      EXPECT_LE(w.dot(u), best + 1e-12);
    }
  }
}

TEST(Norms, WitnessOfZeroIsZero) {
  for (NormKind k : kAllNorms) EXPECT_TRUE(dual_witness(Vector::Zero(6), k).isZero(0.0));
}

TEST(Dft, PairExample) {
  const Spectrum s = dft(vec2(1, 1));
  EXPECT_NEAR(s.coeffs[0].real(), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(std::abs(s.coeffs[1]), 0.0, 1e-15);
  EXPECT_TRUE(s.hermitian);
}

TEST(Dft, ImpulseIsFlat) {
  for (Eigen::Index d : {1, 2, 7, 16, 100}) {
    Vector e = Vector::Zero(d);
    e[0] = 1.0;
    const Spectrum s = dft(e);
    for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(std::abs(s.coeffs[i] - 1.0 / std::sqrt(double(d))), 0.0, 1e-14);
  }
}

TEST(Dft, MatchesReferenceForAllSizes) {
  Rng rng(1);
  for (Eigen::Index d = 1; d <= 70; ++d) {
    const Vector v = rng.vec(d);
    EXPECT_LT(rel_err(dft(v).coeffs, testutil::reference_dft(v)), 1e-12) << d;
  }
  for (Eigen::Index d : {100, 101, 128, 256, 1000, 1024, 1030}) {
    const Vector v = rng.vec(d);
    EXPECT_LT(rel_err(dft(v).coeffs, testutil::reference_dft(v)), 1e-11) << d;
  }
}

TEST(Dft, FastPathsMatchDirectTransform) {
  Rng rng(2);
  for (Eigen::Index d : {8, 64, 100, 512}) {
    const ComplexVector x = rng.vec(d).cast<Complex>() + Complex{0, 1} * rng.vec(d).cast<Complex>();
    EXPECT_LT(rel_err(dft_complex(x), detail::dft_direct(x, -1.0)), 1e-12);
    EXPECT_LT(rel_err(idft_complex(x), detail::dft_direct(x, 1.0)), 1e-12);
  }
}

TEST(Dft, RoundTripProperty) {
  Rng rng(3);
  for (Eigen::Index d : {4, 8, 16, 3, 5, 100}) {
    for (int t = 0; t < 20; ++t) {
      const Vector v = rng.vec(d);
      EXPECT_LT(rel_err(idft(dft(v)), v), 1e-12) << d;
    }
  }
}

TEST(Dft, RealInputGivesExactlyHermitianSpectrum) {
  Rng rng(4);
  for (Eigen::Index d : {2, 5, 8, 9, 100}) {
    const Spectrum s = dft(rng.vec(d));
    EXPECT_TRUE(is_hermitian(s.coeffs, 0.0)) << d;
  }
}

TEST(Dft, ParsevalProperty) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const Vector v = rng.vec(rng.integer(1, 130));
    EXPECT_LT(rel_err(dft(v).coeffs.norm(), v.norm()), 1e-9);
  }
}

TEST(Dft, IdftRejectsAsymmetricSpectrum) {
  Spectrum s{ComplexVector::Zero(4), false};
  s.coeffs[1] = Complex{1.0, 0.0};  // mirror bin 3 left at zero
  EXPECT_THROW(idft(s), SymmetryError);
  Spectrum t{ComplexVector::Zero(2), false};
  t.coeffs[0] = Complex{0.0, 1.0};  // imaginary DC
  EXPECT_THROW(idft(t), SymmetryError);
}

TEST(Dft, IdftDropsTinyImaginaryResidue) {
  Rng rng(8);
  const Vector v = rng.vec(16);
  Spectrum s = dft(v);
  s.coeffs[3] += Complex{0.0, 1e-13};
  const Vector back = idft(s);
  EXPECT_LT(rel_err(back, v), 1e-12);
}

TEST(Convolution, PairExample) {
  const Vector out = circular_convolve(vec2(1, 0), vec2(3, 7));
  EXPECT_NEAR(out[0], 3 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(out[1], 7 / std::sqrt(2.0), 1e-15);
}

TEST(Convolution, IdentityKernel) {
  Rng rng(12);
  for (Eigen::Index d : {1, 2, 8, 64, 100}) {
    const Vector x = rng.vec(d);
    EXPECT_LT(rel_err(circular_convolve(identity_kernel(d), x), x), 1e-14) << d;
  }
}

TEST(Convolution, MatchesDefinition) {
  Rng rng(13);
  for (Eigen::Index d : {2, 3, 8, 64, 128, 100}) {
    const Vector w = rng.vec(d), x = rng.vec(d);
    EXPECT_LT(rel_err(circular_convolve(w, x), testutil::reference_convolve(w, x)), 1e-12) << d;
  }
}

TEST(Convolution, AssociativeAndCommutative) {
  Rng rng(14);
  for (Eigen::Index d : {8, 64, 13}) {
    for (int t = 0; t < 10; ++t) {
      const Vector w1 = rng.vec(d), w2 = rng.vec(d), x = rng.vec(d);
      EXPECT_LT(rel_err(circular_convolve(w2, circular_convolve(w1, x)),
                        circular_convolve(circular_convolve(w2, w1), x)),
                1e-12);
      EXPECT_LT(rel_err(circular_convolve(w1, x), circular_convolve(x, w1)), 1e-12);
    }
  }
}

TEST(Convolution, ConvolutionTheoremProperty) {
  Rng rng(15);
  for (Eigen::Index d : {2, 4, 8, 64, 7, 100}) {
    for (int t = 0; t < 10; ++t) {
      const Vector w = rng.vec(d), x = rng.vec(d);
      const ComplexVector lhs = dft(circular_convolve(w, x)).coeffs;
      const ComplexVector rhs = dft(w).coeffs.cwiseProduct(dft(x).coeffs);
      EXPECT_LT(rel_err(lhs, rhs), 1e-9) << d;
    }
  }
}

TEST(Convolution, LengthMismatchThrows) {
  EXPECT_THROW(circular_convolve(Vector::Ones(3), Vector::Ones(4)), DimensionError);
}

TEST(Flip, IsInvolutionAndAdjoint) {
  Rng rng(16);
  const Vector w = rng.vec(9), x = rng.vec(9), z = rng.vec(9);
  EXPECT_EQ(flip(flip(w)), w);
  // <w * x, z> = <x, flip(w) * z>
  EXPECT_NEAR(circular_convolve(w, x).dot(z), x.dot(circular_convolve(flip(w), z)), 1e-12);
}

TEST(ComplexProjection, Examples) {
  EXPECT_EQ(complex_linf_project(single({2, 0}), 1.0).coeffs[0], Complex(1, 0));
  EXPECT_EQ(complex_linf_project(single({0.3, -0.4}), 1.0).coeffs[0], Complex(0.3, -0.4));
}

// Projection onto the radius-2 disc, checked by brute-force minimization of
// |u - s| over a polar grid of the disc.
TEST(ComplexProjection, MatchesDiscGridSearch) {
  Rng rng(17);
  for (int t = 0; t < 12; ++t) {
    const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Complex s = std::polar(3.0, theta);
    const Complex got = complex_linf_project(single(s), 2.0).coeffs[0];
    EXPECT_NEAR(std::abs(got - std::polar(2.0, theta)), 0.0, 1e-14);
    double best = 1e9;
    Complex arg;
    for (int i = 0; i <= 400; ++i)
      for (int j = 0; j < 720; ++j) {
        const Complex u = std::polar(2.0 * i / 400.0, 2.0 * std::numbers::pi * j / 720.0);
        if (std::abs(u - s) < best) best = std::abs(u - s), arg = u;
      }
    EXPECT_LT(std::abs(got - arg), 2e-2);
    EXPECT_LE(std::abs(got - s), best + 1e-12);
  }
}

TEST(ComplexProjection, IdempotentAndHermitianPreserving) {
  Rng rng(18);
  for (Eigen::Index d : {5, 8, 16}) {
    const Spectrum s = random_spectrum(rng, d);
    Vector radius(d);
    for (Eigen::Index i = 0; i < d; ++i) radius[i] = 0.2 + 0.1 * std::min(i, d - i);
    const Spectrum p = complex_linf_project(s, radius);
    const Spectrum pp = complex_linf_project(p, radius);
    EXPECT_EQ(p.coeffs, pp.coeffs);
    EXPECT_TRUE(is_hermitian(p.coeffs, 0.0));
    for (Eigen::Index i = 0; i < d; ++i) EXPECT_LE(std::abs(p.coeffs[i]), radius[i] * (1 + 1e-15));
    EXPECT_NO_THROW(idft(p));
  }
}

TEST(ComplexProjection, RejectsBadRadius) {
  Rng rng(19);
  const Spectrum s = random_spectrum(rng, 4);
  Vector r = Vector::Ones(4);
  r[1] = 2.0;  // r[3] stays 1
  EXPECT_THROW(complex_linf_project(s, r), InvalidArgument);
  EXPECT_THROW(complex_linf_project(s, -1.0), InvalidArgument);
}

TEST(ComplexSoftThreshold, Examples) {
  EXPECT_EQ(complex_soft_threshold(single({3, 0}), 1.0).coeffs[0], Complex(2, 0));
  const double theta = 0.7;
  EXPECT_EQ(complex_soft_threshold(single(std::polar(0.5, theta)), 1.0).coeffs[0], Complex(0, 0));
  EXPECT_NEAR(std::abs(complex_soft_threshold(single(std::polar(3.0, theta)), 1.0).coeffs[0] - std::polar(2.0, theta)),
              0.0, 1e-15);
}

// Minimizer of 1/2 |u - s|^2 + lambda |u| over a fine Cartesian grid.
TEST(ComplexSoftThreshold, MatchesGridSearch) {
  Rng rng(20);
  for (int t = 0; t < 8; ++t) {
    const Complex s = std::polar(rng.uniform(0.0, 3.0), rng.uniform(-3.0, 3.0));
    const double lambda = rng.uniform(0.1, 1.5);
    auto f = [&](Complex u) { return 0.5 * std::norm(u - s) + lambda * std::abs(u); };
    double best = 1e9;
    Complex arg;
    const int N = 600;
    for (int i = -N; i <= N; ++i)
      for (int j = -N; j <= N; ++j) {
        const Complex u{3.0 * i / N, 3.0 * j / N};
        if (f(u) < best) best = f(u), arg = u;
      }
    const Complex got = complex_soft_threshold(single(s), lambda).coeffs[0];
    EXPECT_LT(std::abs(got - arg), 1.5e-2);
    EXPECT_LE(f(got), best + 1e-12);
  }
}

TEST(ComplexSoftThreshold, HermitianPreserving) {
  Rng rng(21);
  const Spectrum s = random_spectrum(rng, 11);
  const Spectrum t = complex_soft_threshold(s, 0.5);
  EXPECT_TRUE(is_hermitian(t.coeffs, 0.0));
  EXPECT_THROW(complex_soft_threshold(s, -0.1), InvalidArgument);
}
