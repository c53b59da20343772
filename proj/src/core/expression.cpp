// SPDX-License-Identifier: Apache-2.0
#include "smoj/expression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

#include "smoj/asset_io.hpp"
#include "smoj/error.hpp"

namespace smoj::expr {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); }

}  // namespace

double silu(double x) { return x / (1.0 + std::exp(-x)); }

Vector encode_expression(const Vector& f_bs, const Vector& f_mm, const Projection& proj) {
  if (f_bs.size() != kBlendshapeDim) mismatch("encode_expression: f_bs must have 16 entries");
  if (f_mm.size() != kMorphableDim) mismatch("encode_expression: f_mm must have 100 entries");
  if (proj.weight.rows() != kExpressionDim || proj.weight.cols() != kBlendshapeDim + kMorphableDim ||
      proj.bias.size() != kExpressionDim) {
    mismatch("encode_expression: projection must be 16x116 with 16 biases, got " + shape(proj.weight));
  }
  Vector x(kBlendshapeDim + kMorphableDim);
  x << f_bs, f_mm;
  return proj.weight * x + proj.bias;
}

Vector apply_mlp(const std::vector<Layer>& layers, const Vector& x) {
  Vector h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.weight.cols() != h.size() || l.bias.size() != l.weight.rows()) {
      mismatch("mlp layer " + std::to_string(i) + ": weight " + shape(l.weight) + " does not accept input of size " +
               std::to_string(h.size()));
    }
    h = l.weight * h + l.bias;
    if (l.activation == Activation::kSiLU) h = h.unaryExpr([](double v) { return silu(v); });
  }
  return h;
}

DriveFeature build_drive(const Vector& f_exp, const Vector& f_id, const PositionMap& f_pos,
                         const PipelineWeights& weights) {
  if (f_exp.size() != kExpressionDim) mismatch("build_drive: f_exp must have 16 entries");
  if (f_id.size() != weights.id_dim) {
    mismatch("build_drive: f_id has " + std::to_string(f_id.size()) + " entries, manifest declares " +
             std::to_string(weights.id_dim));
  }
  if (f_pos.data.size() != static_cast<std::size_t>(f_pos.height) * f_pos.width * 3) {
    mismatch("build_drive: f_pos buffer does not match its size");
  }
  Vector x(f_exp.size() + f_id.size());
  x << f_exp, f_id;
  DriveFeature out;
  out.fused = apply_mlp(weights.mlp, x);
  out.f_pos = f_pos;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (logits.cols() == 0) continue;
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - mx);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

namespace {

void check_site(const AttentionSite& s) {
  if (s.w_q.cols() != s.w_k.cols()) mismatch("attention: W_Q " + shape(s.w_q) + " and W_K " + shape(s.w_k) + " differ in key dim");
  if (s.w_k.rows() != s.w_v.rows()) mismatch("attention: W_K " + shape(s.w_k) + " and W_V " + shape(s.w_v) + " differ in context dim");
  if (!(s.key_dim() > 0.0)) mismatch("attention: d_k must be > 0");
}

}  // namespace

Matrix cross_attention(const Matrix& f_in, const Matrix& f_ctx, const AttentionSite& site) {
  check_site(site);
  if (f_in.cols() != site.w_q.rows()) mismatch("attention: query features " + shape(f_in) + " vs W_Q " + shape(site.w_q));
  if (f_ctx.cols() != site.w_k.rows()) mismatch("attention: context " + shape(f_ctx) + " vs W_K " + shape(site.w_k));
  if (f_ctx.rows() < 1) mismatch("attention: empty context");
  const Matrix q = f_in * site.w_q;
  const Matrix k = f_ctx * site.w_k;
  const Matrix v = f_ctx * site.w_v;
  return softmax_rows((q * k.transpose()) / std::sqrt(site.key_dim())) * v;
}

double residual_scale(const AttentionSite& site) { return 1.0 / std::sqrt(site.key_dim()); }

Matrix dual_cross_attention(const Matrix& f_sty, const Matrix& f_ref, const Matrix& f_txt,
                            const AttentionSite& site) {
  if (site.w_v.cols() != f_sty.cols()) {
    mismatch("dual attention: residual needs W_V output width " + std::to_string(site.w_v.cols()) +
             " == feature width " + std::to_string(f_sty.cols()));
  }
  return cross_attention(f_sty, f_ref, site) + cross_attention(f_sty, f_txt, site) + f_sty * residual_scale(site);
}

static_assert(std::endian::native == std::endian::little, "SMWT I/O assumes a little-endian host");

std::vector<std::uint8_t> encode_smwt(const Matrix& m) {
  const std::string header = "SMWT v1 " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  std::vector<std::uint8_t> out(header.size() + 4 * static_cast<std::size_t>(m.size()));
  std::memcpy(out.data(), header.data(), header.size());
  std::size_t off = header.size();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      std::memcpy(out.data() + off, &f, 4);
      off += 4;
    }
  }
  return out;
}

Matrix decode_smwt(std::span<const std::uint8_t> bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (nl == bytes.end()) throw ParseError(0, "smwt: missing header line");
  const std::string header(bytes.begin(), nl);
  std::istringstream in(header);
  std::string magic, version, extra;
  long rows = -1, cols = -1;
  in >> magic >> version >> rows >> cols;
  if (magic != "SMWT") throw ParseError(0, "smwt: bad magic");
  if (version != "v1") throw ParseError(5, "smwt: unsupported version '" + version + "'");
  if (!in || rows < 0 || cols < 0 || (in >> extra)) throw ParseError(0, "smwt: malformed header");
  const std::size_t offset = header.size() + 1;
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (bytes.size() - offset != 4 * n) {
    throw ParseError(std::min(bytes.size(), offset + 4 * n),
                     bytes.size() < offset + 4 * n ? "smwt: truncated data" : "smwt: trailing bytes");
  }
  Matrix m(rows, cols);
  std::size_t off = offset;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      float f;
      std::memcpy(&f, bytes.data() + off, 4);
      if (!std::isfinite(f)) throw ParseError(off, "smwt: non-finite value");
      m(r, c) = f;
      off += 4;
    }
  }
  return m;
}

void write_smwt(const std::filesystem::path& path, const Matrix& m) { write_file(path, encode_smwt(m)); }

Matrix read_smwt(const std::filesystem::path& path) { return decode_smwt(read_file(path)); }

namespace {

using nlohmann::json;

Vector as_vector(const Matrix& m, const std::string& what) {
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  mismatch(what + ": expected a vector, got " + shape(m));
}

Matrix load_matrix(const std::filesystem::path& base, const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::kParse, "weights manifest: " + where + " lacks string field '" + key + "'");
  }
  return read_smwt(base / j[key].get<std::string>());
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "silu") return Activation::kSiLU;
  throw Error(ErrorCode::kParse, "weights manifest: unknown activation '" + s + "'");
}

}  // namespace

void check_weights(const PipelineWeights& w) {
  if (w.projection.weight.rows() != kExpressionDim || w.projection.weight.cols() != kBlendshapeDim + kMorphableDim ||
      w.projection.bias.size() != kExpressionDim) {
    mismatch("weights: projection must be 16x116 plus 16 biases");
  }
  if (w.id_dim < 0) mismatch("weights: id_dim must be >= 0");
  Eigen::Index width = kExpressionDim + w.id_dim;
  for (std::size_t i = 0; i < w.mlp.size(); ++i) {
    const Layer& l = w.mlp[i];
    if (l.weight.cols() != width || l.bias.size() != l.weight.rows()) {
      mismatch("weights: mlp layer " + std::to_string(i) + " (" + shape(l.weight) + ") does not chain from width " +
               std::to_string(width));
    }
    width = l.weight.rows();
  }
  for (const auto& [name, site] : w.sites) {
    try {
      check_site(site);
    } catch (const Error& e) {
      mismatch("weights: site '" + name + "': " + e.what());
    }
  }
}

PipelineWeights load_weights(const std::filesystem::path& manifest) {
  const auto bytes = read_file(manifest);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("weights manifest: ") + e.what());
  }
  const std::filesystem::path base = manifest.parent_path();
  try {
    if (j.value("format", std::string()) != "smoj-weights v1") {
      throw Error(ErrorCode::kParse, "weights manifest: format must be \"smoj-weights v1\"");
    }
    PipelineWeights w;
    w.id_dim = j.at("id_dim").get<int>();
    const json& p = j.at("projection");
    w.projection.weight = load_matrix(base, p, "weight", "projection");
    w.projection.bias = as_vector(load_matrix(base, p, "bias", "projection"), "projection bias");
    if (j.contains("mlp")) {
      for (const json& lj : j.at("mlp")) {
        Layer l;
        l.weight = load_matrix(base, lj, "weight", "mlp layer");
        l.bias = as_vector(load_matrix(base, lj, "bias", "mlp layer"), "mlp bias");
        l.activation = parse_activation(lj.value("activation", std::string("identity")));
        w.mlp.push_back(std::move(l));
      }
    }
    if (j.contains("attention")) {
      for (const auto& [name, sj] : j.at("attention").items()) {
        AttentionSite s;
        s.w_q = load_matrix(base, sj, "w_q", "attention site " + name);
        s.w_k = load_matrix(base, sj, "w_k", "attention site " + name);
        s.w_v = load_matrix(base, sj, "w_v", "attention site " + name);
        s.d_k = sj.value("d_k", 0.0);
        w.sites.emplace(name, std::move(s));
      }
    }
    check_weights(w);
    return w;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("weights manifest: ") + e.what());
  }
}

void save_weights(const std::filesystem::path& dir, const PipelineWeights& w) {
  check_weights(w);
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "smoj-weights v1";
  j["id_dim"] = w.id_dim;
  write_smwt(dir / "projection_weight.smwt", w.projection.weight);
  write_smwt(dir / "projection_bias.smwt", w.projection.bias);
  j["projection"] = {{"weight", "projection_weight.smwt"}, {"bias", "projection_bias.smwt"}};
  j["mlp"] = json::array();
  for (std::size_t i = 0; i < w.mlp.size(); ++i) {
    const std::string wn = "mlp" + std::to_string(i) + "_weight.smwt";
    const std::string bn = "mlp" + std::to_string(i) + "_bias.smwt";
    write_smwt(dir / wn, w.mlp[i].weight);
    write_smwt(dir / bn, w.mlp[i].bias);
    j["mlp"].push_back({{"weight", wn},
                        {"bias", bn},
                        {"activation", w.mlp[i].activation == Activation::kSiLU ? "silu" : "identity"}});
  }
  j["attention"] = json::object();
  for (const auto& [name, s] : w.sites) {
    json sj;
    for (const auto& [key, m] : {std::pair{"w_q", &s.w_q}, std::pair{"w_k", &s.w_k}, std::pair{"w_v", &s.w_v}}) {
      const std::string fn = "attn_" + name + "_" + key + ".smwt";
      write_smwt(dir / fn, *m);
      sj[key] = fn;
    }
    sj["d_k"] = s.d_k;
    j["attention"][name] = sj;
  }
  const std::string text = j.dump(2) + "\n";
  write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace smoj::expr
