// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "smoj/error.hpp"
#include "smoj/expression.hpp"

using namespace smoj;
using namespace smoj::expr;

namespace {

Matrix random_matrix(std::mt19937_64& rng, long r, long c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Vector random_vector(std::mt19937_64& rng, long n) { return random_matrix(rng, n, 1); }

AttentionSite random_site(std::mt19937_64& rng, long din, long dctx, long d, long dout) {
  return {random_matrix(rng, din, d, 0.5), random_matrix(rng, dctx, d, 0.5), random_matrix(rng, dctx, dout, 0.5),
          0.0};
}

PipelineWeights random_weights(std::mt19937_64& rng, int id_dim) {
  PipelineWeights w;
  w.projection = {random_matrix(rng, kExpressionDim, kBlendshapeDim + kMorphableDim, 0.1),
                  random_vector(rng, kExpressionDim)};
  w.id_dim = id_dim;
  w.mlp.push_back({random_matrix(rng, 24, kExpressionDim + id_dim, 0.3), random_vector(rng, 24), Activation::kSiLU});
  w.mlp.push_back({random_matrix(rng, 12, 24, 0.3), random_vector(rng, 12), Activation::kIdentity});
  w.sites["ref"] = random_site(rng, 12, 6, 8, 12);
  w.sites["txt"] = random_site(rng, 5, 7, 4, 3);
  w.sites["ref"].d_k = 5.0;
  return w;
}

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("smoj_expr_" + std::to_string(std::random_device{}()) + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace

TEST(Expression, SiluValues) {
  EXPECT_EQ(silu(0.0), 0.0);
  EXPECT_NEAR(silu(1.0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(silu(-1.0), -0.2689414213699951, 1e-15);
  EXPECT_NEAR(silu(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(silu(800.0), 800.0);
}

TEST(Expression, EncodeMatchesLoopOracle) {
  std::mt19937_64 rng(1);
  const Projection p{random_matrix(rng, 16, 116), random_vector(rng, 16)};
  const Vector bs = random_vector(rng, 16), mm = random_vector(rng, 100);
  const Vector got = encode_expression(bs, mm, p);
  ASSERT_EQ(got.size(), 16);
  for (int i = 0; i < 16; ++i) {
    double s = p.bias[i];
    for (int j = 0; j < 16; ++j) s += p.weight(i, j) * bs[j];
    for (int j = 0; j < 100; ++j) s += p.weight(i, 16 + j) * mm[j];
    EXPECT_NEAR(got[i], s, 1e-12);
  }
}

TEST(Expression, EncodeSelectsBlocks) {
  Projection p{Matrix::Zero(16, 116), Vector::Zero(16)};
  for (int i = 0; i < 16; ++i) p.weight(i, i) = 1.0;
  std::mt19937_64 rng(2);
  const Vector bs = random_vector(rng, 16), mm = random_vector(rng, 100);
  EXPECT_EQ(encode_expression(bs, mm, p), bs);
  p.weight.setZero();
  for (int i = 0; i < 16; ++i) p.weight(i, 16 + 99 - i) = 1.0;
  const Vector got = encode_expression(bs, mm, p);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(got[i], mm[99 - i]);
}

TEST(Expression, EncodeRejectsShapes) {
  const Projection p{Matrix::Zero(16, 116), Vector::Zero(16)};
  EXPECT_THROW(encode_expression(Vector::Zero(15), Vector::Zero(100), p), Error);
  EXPECT_THROW(encode_expression(Vector::Zero(16), Vector::Zero(99), p), Error);
  const Projection bad{Matrix::Zero(16, 115), Vector::Zero(16)};
  EXPECT_THROW(encode_expression(Vector::Zero(16), Vector::Zero(100), bad), Error);
}

TEST(Expression, MlpMatchesLoopOracle) {
  std::mt19937_64 rng(3);
  const PipelineWeights w = random_weights(rng, 8);
  const Vector x = random_vector(rng, 24);
  Vector h = x;
  for (const auto& layer : w.mlp) {
    Vector y(layer.weight.rows());
    for (long i = 0; i < y.size(); ++i) {
      double s = layer.bias[i];
      for (long j = 0; j < h.size(); ++j) s += layer.weight(i, j) * h[j];
      y[i] = layer.activation == Activation::kSiLU ? s / (1.0 + std::exp(-s)) : s;
    }
    h = y;
  }
  const Vector got = apply_mlp(w.mlp, x);
  ASSERT_EQ(got.size(), 12);
  EXPECT_LE((got - h).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(apply_mlp(w.mlp, Vector::Zero(23)), Error);
  EXPECT_EQ(apply_mlp({}, x), x);
}

TEST(Expression, BuildDriveConcatenatesAndCarriesPositions) {
  std::mt19937_64 rng(4);
  const PipelineWeights w = random_weights(rng, 8);
  const Vector f_exp = random_vector(rng, 16), f_id = random_vector(rng, 8);
  PositionMap pos{2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
  const DriveFeature d = build_drive(f_exp, f_id, pos, w);
  Vector cat(24);
  cat << f_exp, f_id;
  EXPECT_EQ(d.fused, apply_mlp(w.mlp, cat));
  EXPECT_EQ(d.f_pos, pos);
  EXPECT_THROW(build_drive(f_exp, Vector::Zero(7), pos, w), Error);
  pos.data.pop_back();
  EXPECT_THROW(build_drive(f_exp, f_id, pos, w), Error);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(5);
  const Matrix l = random_matrix(rng, 6, 9, 3.0);
  const Matrix s = softmax_rows(l);
  for (long i = 0; i < s.rows(); ++i) EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-15);
  Matrix shifted = l;
  for (long i = 0; i < l.rows(); ++i) shifted.row(i).array() += 1000.0 * (i + 1);
  EXPECT_LE(max_abs(softmax_rows(shifted), s), 1e-12);
  Matrix huge(1, 2);
  huge << 1e308, -1e308;
  const Matrix h = softmax_rows(huge);
  EXPECT_EQ(h(0, 0), 1.0);
  EXPECT_EQ(h(0, 1), 0.0);
}

TEST(Attention, SingletonContextReturnsValueRow) {
  std::mt19937_64 rng(6);
  for (int c = 0; c < 100; ++c) {
    const AttentionSite site = random_site(rng, 5, 4, 3, 6);
    const Matrix x = random_matrix(rng, 7, 5), ctx = random_matrix(rng, 1, 4);
    const Matrix value = ctx * site.w_v;
    const Matrix got = cross_attention(x, ctx, site);
    for (long i = 0; i < got.rows(); ++i) ASSERT_LE((got.row(i) - value.row(0)).cwiseAbs().maxCoeff(), 1e-12);

    const AttentionSite sq = random_site(rng, 6, 4, 3, 6);
    const Matrix s = random_matrix(rng, 3, 6), r = random_matrix(rng, 1, 4), t = random_matrix(rng, 1, 4);
    const Matrix dual = dual_cross_attention(s, r, t, sq);
    const Matrix expect = (r * sq.w_v).replicate(3, 1) + (t * sq.w_v).replicate(3, 1) + s / std::sqrt(3.0);
    ASSERT_LE(max_abs(dual, expect), 1e-12);
  }
}

TEST(Attention, IdenticalKeysAverageValues) {
  std::mt19937_64 rng(7);
  AttentionSite site = random_site(rng, 4, 3, 2, 5);
  site.w_k.setZero();
  const Matrix x = random_matrix(rng, 2, 4), ctx = random_matrix(rng, 6, 3);
  const Matrix mean = (ctx * site.w_v).colwise().mean();
  const Matrix got = cross_attention(x, ctx, site);
  for (long i = 0; i < 2; ++i) EXPECT_LE((got.row(i) - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, LogitShiftInvariance) {
  // An extra context column feeds the keys but not the values; adding a
  // constant to it shifts every logit of a query row by the same amount.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int c = 0; c < 100; ++c) {
    AttentionSite site = random_site(rng, 5, 5, 4, 3);
    site.w_v.row(4).setZero();
    const Matrix x = random_matrix(rng, 4, 5);
    Matrix ctx = random_matrix(rng, 6, 5);
    const Matrix base = cross_attention(x, ctx, site);
    ctx.col(4).array() += shift(rng);
    ASSERT_LE(max_abs(cross_attention(x, ctx, site), base), 1e-6) << "case " << c;

    const Matrix s = random_matrix(rng, 3, 3);
    AttentionSite sq = random_site(rng, 3, 5, 4, 3);
    sq.w_v.row(4).setZero();
    Matrix r = random_matrix(rng, 5, 5), t = random_matrix(rng, 2, 5);
    const Matrix dbase = dual_cross_attention(s, r, t, sq);
    r.col(4).array() += shift(rng);
    t.col(4).array() += shift(rng);
    ASSERT_LE(max_abs(dual_cross_attention(s, r, t, sq), dbase), 1e-6) << "case " << c;
  }
}

TEST(Attention, MatchesDenseOracle) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> dim(1, 9);
  for (int c = 0; c < 100; ++c) {
    const long n = dim(rng), m = dim(rng), din = dim(rng), dctx = dim(rng), d = dim(rng), dout = dim(rng);
    AttentionSite site = random_site(rng, din, dctx, d, dout);
    if (c % 3 == 0) site.d_k = 0.5 + c;
    const Matrix x = random_matrix(rng, n, din), ctx = random_matrix(rng, m, dctx);
    const Matrix expect = oracle::naive_attention(x, ctx, site.w_q, site.w_k, site.w_v, site.key_dim());
    ASSERT_LE(max_abs(cross_attention(x, ctx, site), expect), 1e-6) << "case " << c;

    AttentionSite sq = random_site(rng, din, dctx, d, din);
    if (c % 2 == 0) sq.d_k = 2.0;
    const Matrix r = random_matrix(rng, m, dctx), t = random_matrix(rng, dim(rng), dctx);
    const Matrix dual_expect = oracle::naive_attention(x, r, sq.w_q, sq.w_k, sq.w_v, sq.key_dim()) +
                               oracle::naive_attention(x, t, sq.w_q, sq.w_k, sq.w_v, sq.key_dim()) +
                               x / std::sqrt(sq.key_dim());
    ASSERT_LE(max_abs(dual_cross_attention(x, r, t, sq), dual_expect), 1e-6) << "case " << c;
    ASSERT_EQ(residual_scale(sq), 1.0 / std::sqrt(sq.key_dim()));
  }
}

TEST(Attention, RejectsShapes) {
  std::mt19937_64 rng(10);
  const AttentionSite site = random_site(rng, 4, 3, 2, 5);
  EXPECT_THROW(cross_attention(Matrix::Zero(2, 3), Matrix::Zero(2, 3), site), Error);
  EXPECT_THROW(cross_attention(Matrix::Zero(2, 4), Matrix::Zero(2, 4), site), Error);
  EXPECT_THROW(cross_attention(Matrix::Zero(2, 4), Matrix::Zero(0, 3), site), Error);
  EXPECT_THROW(dual_cross_attention(Matrix::Zero(2, 4), Matrix::Zero(2, 3), Matrix::Zero(2, 3), site), Error);
}

TEST(Smwt, RoundTripAndLayout) {
  Matrix m(2, 3);
  m << 1.5, -2.0, 0.25, 3.0, 0.0, -0.125;
  const auto bytes = encode_smwt(m);
  const std::string header = "SMWT v1 2 3\n";
  ASSERT_EQ(bytes.size(), header.size() + 24);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  float second;
  std::memcpy(&second, bytes.data() + header.size() + 4, 4);
  EXPECT_EQ(second, -2.0f);
  EXPECT_EQ(decode_smwt(bytes), m);
  EXPECT_EQ(decode_smwt(encode_smwt(Matrix(0, 4))).cols(), 4);
}

TEST(Smwt, RejectsCorruptInput) {
  Matrix m = Matrix::Ones(2, 2);
  auto bytes = encode_smwt(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_smwt(bad), ParseError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_smwt(bad), ParseError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_smwt(bad), ParseError);
  bad = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
  try {
    decode_smwt(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), bad.size() - 4);
  }
  const std::string v2 = "SMWT v2 1 1\n\0\0\0\0";
  EXPECT_THROW(decode_smwt(std::vector<std::uint8_t>(v2.begin(), v2.end())), ParseError);
}

TEST(Weights, ManifestRoundTrip) {
  std::mt19937_64 rng(11);
  PipelineWeights w = random_weights(rng, 8);
  // SMWT stores f32.
  auto to_f32 = [](Matrix& m) { m = m.cast<float>().cast<double>(); };
  to_f32(w.projection.weight);
  for (auto& l : w.mlp) to_f32(l.weight);
  for (auto& [name, s] : w.sites) {
    to_f32(s.w_q);
    to_f32(s.w_k);
    to_f32(s.w_v);
  }
  w.projection.bias = w.projection.bias.cast<float>().cast<double>();
  for (auto& l : w.mlp) l.bias = l.bias.cast<float>().cast<double>();
  check_weights(w);
  TempDir dir;
  save_weights(dir.path(), w);
  const PipelineWeights back = load_weights(dir.path() / "manifest.json");
  EXPECT_EQ(back.id_dim, 8);
  EXPECT_EQ(back.projection.weight, w.projection.weight);
  EXPECT_EQ(back.projection.bias, w.projection.bias);
  ASSERT_EQ(back.mlp.size(), 2u);
  EXPECT_EQ(back.mlp[0].activation, Activation::kSiLU);
  EXPECT_EQ(back.mlp[1].activation, Activation::kIdentity);
  EXPECT_EQ(back.mlp[1].weight, w.mlp[1].weight);
  ASSERT_EQ(back.sites.size(), 2u);
  EXPECT_EQ(back.sites.at("ref").d_k, 5.0);
  EXPECT_EQ(back.sites.at("txt").w_v, w.sites.at("txt").w_v);
}

TEST(Weights, CheckAndLoadErrors) {
  std::mt19937_64 rng(12);
  PipelineWeights w = random_weights(rng, 8);
  w.id_dim = 7;
  EXPECT_THROW(check_weights(w), Error);
  w = random_weights(rng, 8);
  w.sites["ref"].w_k = Matrix::Zero(6, 7);
  EXPECT_THROW(check_weights(w), Error);
  TempDir dir;
  EXPECT_THROW(load_weights(dir.path() / "missing.json"), Error);
  std::ofstream(dir.path() / "bad.json") << "{\"format\": \"smoj-weights v9\"}";
  EXPECT_THROW(load_weights(dir.path() / "bad.json"), Error);
  std::ofstream(dir.path() / "junk.json") << "{not json";
  try {
    load_weights(dir.path() / "junk.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}
