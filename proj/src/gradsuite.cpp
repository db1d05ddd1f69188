// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "kgr/gradcheck.hpp"
#include "kgr/harness.hpp"
#include "kgr/ops.hpp"

namespace kgr {
namespace {

using ad::Tensor;

Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(ad::shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Scalar probe: sum of the output weighted by fixed random coefficients,
// so that no gradient cancels by symmetry.
struct Probe {
  Rng rng;
  std::vector<Tensor> weights;
  std::size_t next = 0;

  Tensor operator()(const Tensor& out) {
    if (next == weights.size()) weights.push_back(random_tensor(out.shape(), rng));
    return ad::sum(ad::mul(out, weights[next++]));
  }
};

}  // namespace

std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed) {
  const Rng root(seed);
  std::vector<GradCheckEntry> out;

  auto check = [&](const std::string& name, std::vector<Tensor> inputs, auto&& body) {
    Probe probe{root.derive("probe/" + name), {}, 0};
    auto f = [&]() {
      probe.next = 0;
      return probe(body(inputs));
    };
    out.push_back({name, ad::grad_check(f, inputs)});
  };

  Rng rng = root.derive("inputs");
  auto t = [&rng](ad::Shape s) { return random_tensor(std::move(s), rng); };

  check("matmul", {t({3, 4}), t({4, 2})}, [](auto& in) { return ad::matmul(in[0], in[1]); });
  check("transpose", {t({3, 4})}, [](auto& in) { return ad::transpose(in[0]); });
  check("add", {t({2, 3}), t({2, 3})}, [](auto& in) { return ad::add(in[0], in[1]); });
  check("sub", {t({2, 3}), t({2, 3})}, [](auto& in) { return ad::sub(in[0], in[1]); });
  check("mul", {t({2, 3}), t({2, 3})}, [](auto& in) { return ad::mul(in[0], in[1]); });
  check("scale", {t({2, 3})}, [](auto& in) { return ad::scale(in[0], -1.7); });
  check("add_bias", {t({3, 4}), t({4})}, [](auto& in) { return ad::add_bias(in[0], in[1]); });
  check("scale_by", {t({3, 2}), t({1})}, [](auto& in) { return ad::scale_by(in[0], in[1]); });
  check("softmax_rows", {t({3, 4})}, [](auto& in) { return ad::softmax(in[0], 1); });
  check("softmax_cols", {t({3, 4})}, [](auto& in) { return ad::softmax(in[0], 0); });
  check("layer_norm", {t({3, 5}), t({5}), t({5})},
        [](auto& in) { return ad::layer_norm(in[0], in[1], in[2]); });
  check("gelu", {t({3, 4})}, [](auto& in) { return ad::gelu(in[0]); });
  check("sigmoid", {random_tensor({3, 4}, rng, -4.0, 4.0)}, [](auto& in) { return ad::sigmoid(in[0]); });
  check("concat_rows", {t({2, 3}), t({1, 3})}, [](auto& in) { return ad::concat(in[0], in[1], 0); });
  check("concat_cols", {t({2, 3}), t({2, 2})}, [](auto& in) { return ad::concat(in[0], in[1], 1); });
  check("slice", {t({4, 3})}, [](auto& in) { return ad::slice(in[0], 1, 1, 3); });
  check("mean_rows", {t({4, 3})}, [](auto& in) { return ad::mean(in[0], 0); });
  check("mean_cols", {t({4, 3})}, [](auto& in) { return ad::mean(in[0], 1); });
  check("sum", {t({2, 3})}, [](auto& in) { return ad::sum(in[0]); });
  check("gather_rows", {t({5, 3})}, [](auto& in) {
    const std::vector<std::int64_t> ids = {4, 0, 4, 2};
    return ad::gather_rows(in[0], ids);
  });
  check("masked_softmax", {t({4, 4})}, [](auto& in) { return ad::softmax(ad::mask_future(in[0]), 1); });
  for (auto reduction : {ad::Reduction::kMean, ad::Reduction::kSum}) {
    check(reduction == ad::Reduction::kMean ? "cross_entropy_mean" : "cross_entropy_sum", {t({4, 6})},
          [reduction](auto& in) {
            const std::vector<std::int64_t> ids = {0, 5, 2, 3};
            const std::vector<std::uint8_t> mask = {0, 1, 1, 1};
            return ad::cross_entropy(in[0], ids, mask, reduction);
          });
  }

  // The composed model at tiny sizes, every parameter checked.
  for (auto strategy : {fusion::Strategy::kModality, fusion::Strategy::kElement}) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.fusion = strategy;
    cfg.patches = 4;
    cfg.patch_dim = 4;
    cfg.d_model = 8;
    cfg.encoder_heads = 2;
    cfg.decoder_layers = 1;
    cfg.decoder_heads = 2;
    cfg.context = 24;
    cfg.max_gen_len = 4;
    cfg.instruction = "describe .";
    const std::vector<std::string> reports = {"there is mild edema .", "no acute findings ."};
    ReportModel model = ReportModel::create(cfg, build_tokenizer(reports, cfg.instruction), graph_for(cfg));
    Rng data_rng = root.derive("model_input");
    const Tensor image = random_tensor({cfg.patches, cfg.patch_dim}, data_rng);
    const auto targets = model.target_ids(reports[0]);

    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    auto f = [&]() { return model.loss(image, targets); };
    // Many model gradients are ~1e-9; a two-point difference at eps 1e-4
    // cannot resolve them against roundoff in a loss of order 1.
    ad::GradCheckOptions opts;
    opts.eps = 2e-3;
    opts.five_point = true;
    out.push_back({"model_" + std::string(fusion::strategy_name(strategy)), ad::grad_check(f, params, opts)});
  }
  return out;
}

}  // namespace kgr
