#include "fedmpa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "fedmpa/data.hpp"
#include "fedmpa/federation.hpp"
#include "fedmpa/models.hpp"
#include "fedmpa/nn.hpp"
#include "fedmpa/rng.hpp"

namespace fedmpa {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace {

// Loss at (params, structure); fills the concatenated gradient when asked.
using Objective =
    std::function<double(const MlpParams&, const LearnedStructure*, std::vector<double>*)>;

ClientState make_problem(std::uint64_t seed) {
  SbmSpec spec;
  spec.n = 14;
  spec.classes = 3;
  spec.p_in = 0.5;
  spec.p_out = 0.1;
  spec.d0 = 5;
  spec.seed = seed;
  Dataset ds = generate_sbm(spec);
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < ds.n_nodes(); ++i) (i % 2 == 0 ? train : val).push_back(i);
  auto params = MlpParams::glorot(mlp_dims(spec.d0, 8, 2, spec.classes),
                                  mix_seed(seed, seed_tag::kInit));
  return make_client(0, ds.graph, ds.features, ds.labels, std::move(train), std::move(val), {},
                     std::move(params), OptimizerConfig{}, seed);
}

std::vector<bool> relu_pattern(const MlpParams& params, const DenseMatrix& x) {
  Rng unused(0);
  auto fwd = mlp_forward(params, x, 0.0, Mode::Eval, unused);
  std::vector<bool> out;
  for (const auto& p : fwd.tape.preacts)
    for (double v : p.values()) out.push_back(v > 0.0);
  return out;
}

std::vector<double> concat(const MlpParams& grads, const std::vector<double>& extra) {
  auto g = grads.flatten();
  g.insert(g.end(), extra.begin(), extra.end());
  return g;
}

GradCheckResult check_path(const std::string& name, const ClientState& client,
                           const MlpParams& params, const std::optional<LearnedStructure>& st,
                           const Objective& objective, const GradCheckOptions& opts,
                           std::uint64_t probe_seed) {
  GradCheckResult res;
  res.path = name;
  res.tolerance = opts.tolerance;
  const LearnedStructure* sp = st ? &*st : nullptr;
  std::vector<double> grad;
  objective(params, sp, &grad);

  const std::size_t n_mlp = params.parameter_count();
  const std::size_t n_total = n_mlp + (st ? st->n_params() : 0);
  const auto base_pattern = relu_pattern(params, client.features);
  const auto flat = params.flatten();
  Rng rng(probe_seed);

  const std::size_t max_attempts = opts.probes * 20;
  for (std::size_t attempt = 0; res.probes < opts.probes && attempt < max_attempts; ++attempt) {
    const auto idx = static_cast<std::size_t>(rng() % n_total);
    double plus = 0.0, minus = 0.0;
    if (idx < n_mlp) {
      MlpParams p = params, m = params;
      auto fp = flat, fm = flat;
      fp[idx] += opts.step;
      fm[idx] -= opts.step;
      p.unflatten(fp);
      m.unflatten(fm);
      if (relu_pattern(p, client.features) != base_pattern ||
          relu_pattern(m, client.features) != base_pattern) {
        ++res.redrawn;
        continue;
      }
      plus = objective(p, sp, nullptr);
      minus = objective(m, sp, nullptr);
    } else {
      LearnedStructure sp_plus = *st, sp_minus = *st;
      sp_plus.logits()[idx - n_mlp] += opts.step;
      sp_minus.logits()[idx - n_mlp] -= opts.step;
      plus = objective(params, &sp_plus, nullptr);
      minus = objective(params, &sp_minus, nullptr);
    }
    const double numeric = (plus - minus) / (2.0 * opts.step);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(grad[idx], numeric));
    ++res.probes;
  }
  return res;
}

Objective head_objective(const ClientState& client, const DiffusionConfig& dcfg,
                         const MpaeConfig& mcfg, std::uint64_t sample_seed) {
  return [&client, dcfg, mcfg, sample_seed](const MlpParams& p, const LearnedStructure* s,
                                            std::vector<double>* grad) {
    Rng rng(sample_seed);  // same negative samples at every evaluation
    HeadLoss l = mpae_loss(p, client, dcfg, mcfg, s, rng, 0.0);
    if (grad) *grad = concat(l.grads, l.structure_grads);
    return l.loss;
  };
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts) {
  const ClientState client = make_problem(opts.seed);
  const MlpParams& params = client.params;
  DiffusionConfig dcfg;
  std::vector<GradCheckResult> out;
  std::uint64_t tag = 0;
  auto probe_seed = [&] { return mix_seed(opts.seed, 500 + tag++); };

  const Objective ce_mlp = [&client](const MlpParams& p, const LearnedStructure*,
                                     std::vector<double>* grad) {
    Rng unused(0);
    auto fwd = mlp_forward(p, client.features, 0.0, Mode::Eval, unused);
    auto ce = softmax_ce_loss(fwd.logits, client.labels, client.train);
    if (grad) *grad = backward(p, fwd.tape, ce.grad).flatten();
    return ce.loss;
  };
  out.push_back(check_path("ce_mlp", client, params, std::nullopt, ce_mlp, opts, probe_seed()));

  MpaeConfig plain;
  plain.gamma = 0.0;
  out.push_back(check_path("ce_diffuse_mlp", client, params, std::nullopt,
                           head_objective(client, dcfg, plain, 1), opts, probe_seed()));

  MpaeConfig simplified;
  simplified.beta = 0.7;
  simplified.gamma = 1.3;
  out.push_back(check_path("mpae_simplified", client, params, std::nullopt,
                           head_objective(client, dcfg, simplified, 1), opts, probe_seed()));

  MpaeConfig post = simplified;
  post.decoder_input = MpaeConfig::DecoderInput::PostSoftmax;
  out.push_back(check_path("mpae_post_softmax", client, params, std::nullopt,
                           head_objective(client, dcfg, post, 1), opts, probe_seed()));

  MpaeConfig sampled = simplified;
  sampled.dense_recon_max_nodes = 0;
  out.push_back(check_path("mpae_sampled", client, params, std::nullopt,
                           head_objective(client, dcfg, sampled, 3), opts, probe_seed()));

  for (bool super : {true, false}) {
    MpaeConfig learn;
    learn.recon_mode = MpaeConfig::Recon::LearnableStructure;
    learn.super_node = super;
    learn.a = 0.8;
    learn.b = 1.2;
    std::optional<LearnedStructure> st(std::in_place, client.norm_adj, super);
    // Move off the initial weights so the renormalization terms matter.
    Rng jitter(mix_seed(opts.seed, 99));
    for (double& v : st->logits()) v += 0.3 * (uniform01(jitter) - 0.5);
    out.push_back(check_path(super ? "mpae_learnable_super" : "mpae_learnable", client, params,
                             st, head_objective(client, dcfg, learn, 1), opts, probe_seed()));
  }
  return out;
}

}  // namespace fedmpa
