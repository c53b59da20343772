// SPDX-License-Identifier: Apache-2.0
//
// Expression feature fusion and cross-attention kernels with loadable weights.
//
//   f_exp   = P [f_bs; f_mm] + b                       (16 x 116 projection)
//   f_drive = (MLP([f_exp; f_id]), f_pos)
//   attn(X, C) = softmax((X W_Q)(C W_K)^T / sqrt(d_k)) (C W_V)
//   dual(S, R, T) = attn(S, R) + attn(S, T) + S / sqrt(d_k)
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace smoj::expr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kBlendshapeDim = 16;
inline constexpr int kMorphableDim = 100;
inline constexpr int kExpressionDim = 16;

struct Projection {
  Matrix weight;  // kExpressionDim x (kBlendshapeDim + kMorphableDim)
  Vector bias;    // kExpressionDim
};

enum class Activation { kIdentity, kSiLU };

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

struct AttentionSite {
  Matrix w_q;  // D_in x d
  Matrix w_k;  // D_ctx x d
  Matrix w_v;  // D_ctx x D_out
  // Scale denominator is sqrt(d_k); 0 means w_q.cols().
  double d_k = 0.0;

  double key_dim() const { return d_k > 0.0 ? d_k : static_cast<double>(w_q.cols()); }
};

// Rasterized 3DMM vertex positions, carried through untouched.
struct PositionMap {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // H*W*3

  friend bool operator==(const PositionMap&, const PositionMap&) = default;
};

struct DriveFeature {
  Vector fused;
  PositionMap f_pos;
};

struct PipelineWeights {
  Projection projection;
  std::vector<Layer> mlp;
  int id_dim = 0;
  std::map<std::string, AttentionSite> sites;
};

double silu(double x);

// All throw Error(kInvalidArgument) on dimension mismatch.
Vector encode_expression(const Vector& f_bs, const Vector& f_mm, const Projection& proj);
Vector apply_mlp(const std::vector<Layer>& layers, const Vector& x);
DriveFeature build_drive(const Vector& f_exp, const Vector& f_id, const PositionMap& f_pos,
                         const PipelineWeights& weights);

// Row-wise, max-subtracted softmax.
Matrix softmax_rows(const Matrix& logits);

// f_in: N x D_in, f_ctx: M x D_ctx (M >= 1). Returns N x D_out.
Matrix cross_attention(const Matrix& f_in, const Matrix& f_ctx, const AttentionSite& site);

// Both contexts share the site's projections. The residual requires
// D_out == D_in and is f_sty / sqrt(d_k).
Matrix dual_cross_attention(const Matrix& f_sty, const Matrix& f_ref, const Matrix& f_txt,
                            const AttentionSite& site);
double residual_scale(const AttentionSite& site);

// SMWT matrix files: "SMWT v1 rows cols\n" then rows*cols f32 little-endian,
// row-major.
std::vector<std::uint8_t> encode_smwt(const Matrix& m);
Matrix decode_smwt(std::span<const std::uint8_t> bytes);
void write_smwt(const std::filesystem::path& path, const Matrix& m);
Matrix read_smwt(const std::filesystem::path& path);

// JSON manifest; matrix paths are relative to the manifest's directory.
//
//   {"format": "smoj-weights v1", "id_dim": N,
//    "projection": {"weight": "p.smwt", "bias": "pb.smwt"},
//    "mlp": [{"weight": "...", "bias": "...", "activation": "silu"|"identity"}],
//    "attention": {"name": {"w_q": "...", "w_k": "...", "w_v": "...", "d_k": 8}}}
PipelineWeights load_weights(const std::filesystem::path& manifest);
// Writes the manifest and one SMWT file per matrix into `dir`.
void save_weights(const std::filesystem::path& dir, const PipelineWeights& weights);

// Checks that all shapes chain: projection 16 x 116, MLP input
// kExpressionDim + id_dim, consecutive layers, attention shapes.
void check_weights(const PipelineWeights& weights);

}  // namespace smoj::expr
