// SPDX-License-Identifier: Apache-2.0
#include "kgr/fusion.hpp"

#include <array>

#include "kgr/error.hpp"
#include "kgr/ops.hpp"

namespace kgr::fusion {
namespace {

void require_pair(const char* op, const ad::Tensor& regional, const ad::Tensor& aligned) {
  if (regional.rank() != 2 || regional.shape() != aligned.shape()) {
    throw DimensionError(std::string(op) + ": regional " + ad::shape_str(regional.shape()) + " vs aligned " +
                         ad::shape_str(aligned.shape()));
  }
}

constexpr std::array<std::pair<Strategy, std::string_view>, 5> kNames = {{
    {Strategy::kElement, "element"},
    {Strategy::kModality, "modality"},
    {Strategy::kAverage, "average"},
    {Strategy::kNone, "none"},
    {Strategy::kDisease, "disease"},
}};

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (auto [k, name] : kNames)
    if (k == s) return name;
  return "none";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

ad::Tensor align(const ad::Tensor& regional, const ad::Tensor& disease, const MhaBlock& mha,
                 std::vector<ad::Tensor>* attention) {
  ad::Tensor out = mha.forward(regional, disease, false, attention);
  if (out.shape() != regional.shape()) {
    throw DimensionError("align: output " + ad::shape_str(out.shape()) + " does not match regional features " +
                         ad::shape_str(regional.shape()));
  }
  return out;
}

GateFusion GateFusion::create(std::size_t d, Rng& rng) { return {uniform_param({2 * d, d}, 2 * d, rng)}; }

void GateFusion::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_gate", w_gate});
}

ad::Tensor element_fuse(const ad::Tensor& regional, const ad::Tensor& aligned, const GateFusion& gf,
                        ad::Tensor* gate_out) {
  require_pair("element_fuse", regional, aligned);
  const ad::Tensor gate = ad::sigmoid(ad::matmul(ad::concat(regional, aligned, 1), gf.w_gate));
  if (gate_out != nullptr) *gate_out = gate;
  // gate * Z_v + (1 - gate) * Z~_g, written as Z~_g + gate * (Z_v - Z~_g).
  return ad::add(aligned, ad::mul(gate, ad::sub(regional, aligned)));
}

MoeFusion MoeFusion::create(std::size_t d, Rng& rng) {
  MoeFusion mf;
  mf.regional_expert = {Linear::create(d, d, true, rng), LayerNormParams::create(d)};
  mf.disease_expert = {Linear::create(d, d, true, rng), LayerNormParams::create(d)};
  mf.router_hidden = Linear::create(2 * d, d, true, rng);
  mf.router_out = Linear::create(d, 2, true, rng);
  return mf;
}

void MoeFusion::collect(const std::string& prefix, ParameterList& out) const {
  regional_expert.linear.collect(prefix + ".expert_regional.linear", out);
  regional_expert.norm.collect(prefix + ".expert_regional.norm", out);
  disease_expert.linear.collect(prefix + ".expert_disease.linear", out);
  disease_expert.norm.collect(prefix + ".expert_disease.norm", out);
  router_hidden.collect(prefix + ".router.hidden", out);
  router_out.collect(prefix + ".router.out", out);
}

ad::Tensor route(const ad::Tensor& regional, const ad::Tensor& aligned, const MoeFusion& mf) {
  require_pair("route", regional, aligned);
  const ad::Tensor pooled = ad::concat(ad::mean(regional, 0), ad::mean(aligned, 0), 1);
  const ad::Tensor hidden = ad::gelu(mf.router_hidden.forward(pooled));
  return ad::softmax(mf.router_out.forward(hidden), 1);
}

ad::Tensor modality_fuse(const ad::Tensor& regional, const ad::Tensor& aligned, const MoeFusion& mf,
                         std::optional<std::pair<double, double>> forced_weights, ad::Tensor* weights_out) {
  require_pair("modality_fuse", regional, aligned);
  const ad::Tensor weights = forced_weights ? ad::Tensor::from({1, 2}, {forced_weights->first, forced_weights->second})
                                            : route(regional, aligned, mf);
  if (weights_out != nullptr) *weights_out = weights;
  const ad::Tensor e1 = mf.regional_expert.forward(regional);
  const ad::Tensor e2 = mf.disease_expert.forward(aligned);
  return ad::add(ad::scale_by(e1, ad::slice(weights, 1, 0, 1)), ad::scale_by(e2, ad::slice(weights, 1, 1, 2)));
}

ad::Tensor average_fuse(const ad::Tensor& regional, const ad::Tensor& aligned) {
  require_pair("average_fuse", regional, aligned);
  return ad::scale(ad::add(regional, aligned), 0.5);
}

}  // namespace kgr::fusion
