#include "op_checks.hpp"

#include <array>
#include <functional>
#include <utility>

#include "boxprior/fusion/model.hpp"
#include "boxprior/numerics/autodiff.hpp"
#include "boxprior/numerics/losses.hpp"
#include "boxprior/numerics/ops.hpp"
#include "oracles.hpp"

namespace oracle {
namespace {

namespace nad = boxprior::numerics::ad;
namespace fad = boxprior::fusion::ad;
using boxprior::numerics::Activation;
using boxprior::numerics::AttentionParams;
using boxprior::numerics::CheckedTensor;
using boxprior::numerics::Matrix;
using boxprior::numerics::MlpParams;
using boxprior::numerics::Rng;
using boxprior::numerics::Tape;
using boxprior::numerics::Var;
using boxprior::numerics::WideMatrix;
using W = long double;

class Registry {
 public:
  explicit Registry(Tape& t) : t_(t) {}

  Var param(const Matrix& m) {
    const Var v = t_.parameter(m);
    entries_.emplace_back(const_cast<Matrix*>(&m), v);
    return v;
  }
  boxprior::numerics::MlpT<Var> mlp(const MlpParams& p) {
    return boxprior::numerics::map_tensors(p, [&](const Matrix& m) { return param(m); });
  }
  boxprior::numerics::AttentionT<Var> attention(const AttentionParams& p) {
    return boxprior::numerics::map_tensors(p, [&](const Matrix& m) { return param(m); });
  }
  Tape& tape() { return t_; }
  const std::vector<std::pair<Matrix*, Var>>& entries() const { return entries_; }

 private:
  Tape& t_;
  std::vector<std::pair<Matrix*, Var>> entries_;
};

WideMatrix wide(const Matrix& m) { return m.cast<W>(); }
template <class S>
auto wide(const S& s) {
  return boxprior::numerics::map_tensors(s, [](const Matrix& m) { return m.cast<W>(); });
}

W weighted(const WideMatrix& out, const Matrix& weights) {
  W total = 0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * static_cast<W>(weights[i]);
  return total;
}

OpCheck run(const std::string& op, const std::function<Var(Registry&)>& build,
            const std::function<W()>& loss, double step) {
  Tape t;
  Registry reg(t);
  const Var out = build(reg);
  t.backward(out);
  std::vector<Matrix> analytic;
  analytic.reserve(reg.entries().size());
  for (const auto& [ptr, v] : reg.entries()) analytic.push_back(t.grad(v));
  std::vector<CheckedTensor> checked;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    checked.push_back({op + "[" + std::to_string(i) + "]", reg.entries()[i].first, &analytic[i]});
  }
  return {op, boxprior::numerics::grad_check(loss, checked, step)};
}

MlpParams layered(std::initializer_list<std::size_t> widths,
                  std::initializer_list<Activation> acts, Rng& rng) {
  const std::vector<std::size_t> w(widths);
  MlpParams mlp = boxprior::numerics::init_mlp(w, Activation::kNone, Activation::kNone, rng);
  std::size_t i = 0;
  for (Activation a : acts) {
    mlp.layers[i].activation = a;
    for (double& b : mlp.layers[i].bias.data()) b = rng.uniform(-0.5, 0.5);
    ++i;
  }
  return mlp;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> out(n);
  for (int& v : out) v = static_cast<int>(rng.below(classes));
  return out;
}

}  // namespace

std::vector<OpCheck> check_parameterized_ops(std::uint64_t seed, double step) {
  Rng rng(seed);
  std::vector<OpCheck> out;
  constexpr std::size_t n = 6;
  constexpr std::size_t d = 8;
  constexpr std::size_t dl = 5;
  constexpr std::size_t c = 4;
  constexpr double eps = 1e-8;

  {
    MlpParams mlp = layered({5, 7, 6, 4, 3},
                            {Activation::kTanh, Activation::kRelu, Activation::kSigmoid,
                             Activation::kNone},
                            rng);
    Matrix x = random_matrix(rng, n, 5);
    const Matrix w = random_matrix(rng, n, 3);
    out.push_back(run(
        "mlp",
        [&](Registry& r) {
          return nad::dot_constant(r.tape(), nad::mlp(r.tape(), r.mlp(mlp), r.param(x)), w);
        },
        [&] { return weighted(boxprior::numerics::mlp_forward(wide(mlp), wide(x)), w); },
        step));
  }

  {
    AttentionParams att = boxprior::numerics::init_attention(d, 2, rng);
    Matrix q = random_matrix(rng, n, d);
    Matrix k = random_matrix(rng, n, 1);
    Matrix v = random_matrix(rng, n, d);
    const Matrix w = random_matrix(rng, n, d);
    out.push_back(run(
        "multihead_attention",
        [&](Registry& r) {
          auto& t = r.tape();
          return nad::dot_constant(
              t, nad::multihead_attention(t, r.attention(att), r.param(q), r.param(k), r.param(v)),
              w);
        },
        [&] {
          const WideMatrix kw = wide(k);
          return weighted(
              boxprior::numerics::multihead_attention(wide(att), wide(q), kw.data(), wide(v)), w);
        },
        step));
  }

  {
    MlpParams learner = layered({dl, dl}, {Activation::kTanh}, rng);
    Matrix f3d = random_matrix(rng, n, dl);
    Matrix f2d = random_matrix(rng, n, dl);
    const Matrix w = random_matrix(rng, n, 2 * dl);
    out.push_back(run(
        "fuse_layer",
        [&](Registry& r) {
          auto& t = r.tape();
          return nad::dot_constant(
              t, fad::fuse_layer(t, r.param(f3d), r.param(f2d), r.mlp(learner)), w);
        },
        [&] {
          const std::array parts{boxprior::numerics::mlp_forward(wide(learner), wide(f3d)),
                                 wide(f2d)};
          return weighted(boxprior::numerics::concat_cols<W>(parts), w);
        },
        step));
  }

  {
    MlpParams down = layered({3 * 2 * dl, d}, {Activation::kTanh}, rng);
    std::vector<Matrix> fused;
    for (int l = 0; l < 3; ++l) fused.push_back(random_matrix(rng, n, 2 * dl));
    const Matrix w = random_matrix(rng, n, d);
    out.push_back(run(
        "fuse_multiscale",
        [&](Registry& r) {
          auto& t = r.tape();
          std::vector<Var> parts;
          for (const Matrix& f : fused) parts.push_back(r.param(f));
          return nad::dot_constant(t, fad::fuse_multiscale(t, parts, r.mlp(down)), w);
        },
        [&] {
          std::vector<WideMatrix> parts;
          for (const Matrix& f : fused) parts.push_back(wide(f));
          return weighted(boxprior::numerics::mlp_forward(
                              wide(down), boxprior::numerics::concat_cols<W>(parts)),
                          w);
        },
        step));
  }

  {
    MlpParams gate = layered({2 * d, d}, {Activation::kTanh}, rng);
    MlpParams value = layered({2 * d, d}, {Activation::kNone}, rng);
    Matrix f2d = random_matrix(rng, n, d);
    Matrix f2d3d = random_matrix(rng, n, 2 * d);
    const Matrix w = random_matrix(rng, n, d);
    out.push_back(run(
        "msfskd_fuse",
        [&](Registry& r) {
          auto& t = r.tape();
          return nad::dot_constant(
              t, fad::msfskd_fuse(t, r.param(f2d), r.param(f2d3d), r.mlp(gate), r.mlp(value)),
              w);
        },
        [&] {
          namespace ops = boxprior::numerics;
          const WideMatrix x = wide(f2d3d);
          const WideMatrix g = ops::sigmoid(ops::mlp_forward(wide(gate), x));
          return weighted(
              ops::add(wide(f2d), ops::hadamard(g, ops::mlp_forward(wide(value), x))), w);
        },
        step));
  }

  {
    AttentionParams att = boxprior::numerics::init_attention(d, 2, rng);
    Matrix embeddings = random_matrix(rng, c, d);
    Matrix features = random_matrix(rng, n, d);
    const std::vector<int> labels = random_labels(rng, n, c);
    const int box_class = labels.front();
    const Matrix w = random_matrix(rng, n, d);
    out.push_back(run(
        "class_aware_attention",
        [&](Registry& r) {
          auto& t = r.tape();
          return nad::dot_constant(
              t,
              fad::class_aware_attention(t, r.param(features), labels, box_class,
                                         r.param(embeddings), r.attention(att), eps),
              w);
        },
        [&] {
          namespace ops = boxprior::numerics;
          WideMatrix e(n, d);
          WideMatrix ebox(n, d);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              e(i, j) = embeddings(static_cast<std::size_t>(labels[i]), j);
              ebox(i, j) = embeddings(static_cast<std::size_t>(box_class), j);
            }
          }
          const auto sim = ops::cosine_similarity<W>(e, ebox, eps);
          return weighted(ops::multihead_attention<W>(wide(att), e, sim, wide(features)), w);
        },
        step));
  }

  {
    MlpParams classifier = layered({d, c}, {Activation::kNone}, rng);
    Matrix attended = random_matrix(rng, n, d);
    const std::vector<int> labels = random_labels(rng, n, c);
    out.push_back(run(
        "branch_classifier+seg_loss",
        [&](Registry& r) {
          auto& t = r.tape();
          const Var logits = nad::mlp(t, r.mlp(classifier), r.param(attended));
          const std::array terms{nad::cross_entropy(t, logits, labels),
                                 nad::lovasz_softmax(t, nad::softmax_rows(t, logits), labels)};
          const std::array<double, 2> ones{1.0, 1.0};
          return nad::weighted_sum(t, terms, ones);
        },
        [&] {
          namespace ops = boxprior::numerics;
          const WideMatrix logits = ops::mlp_forward(wide(classifier), wide(attended));
          return ops::cross_entropy<W>(logits, labels) +
                 ops::lovasz_softmax<W>(ops::softmax_rows(logits), labels);
        },
        step));
  }

  {
    MlpParams classifier = layered({dl, c}, {Activation::kNone}, rng);
    Matrix features = random_matrix(rng, n, dl);
    const Matrix teacher = random_probs(rng, n, c);
    out.push_back(run(
        "layer_classifier+distill_loss",
        [&](Registry& r) {
          auto& t = r.tape();
          const Var probs =
              nad::softmax_rows(t, nad::mlp(t, r.mlp(classifier), r.param(features)));
          return nad::kl_divergence(t, t.constant(teacher), probs);
        },
        [&] {
          namespace ops = boxprior::numerics;
          return ops::kl_divergence<W>(
              wide(teacher), ops::softmax_rows(ops::mlp_forward(wide(classifier), wide(features))));
        },
        step));
  }

  {
    Matrix a = random_matrix(rng, n, d);
    Matrix b = random_matrix(rng, n, d);
    const Matrix w = random_matrix(rng, n, 1);
    out.push_back(run(
        "cosine_similarity",
        [&](Registry& r) {
          auto& t = r.tape();
          return nad::dot_constant(t, nad::cosine_similarity(t, r.param(a), r.param(b), eps), w);
        },
        [&] {
          const auto s = boxprior::numerics::cosine_similarity<W>(wide(a), wide(b), eps);
          W total = 0;
          for (std::size_t i = 0; i < s.size(); ++i) total += s[i] * static_cast<W>(w[i]);
          return total;
        },
        step));
  }
  return out;
}

}  // namespace oracle
