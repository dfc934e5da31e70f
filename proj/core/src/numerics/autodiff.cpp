#include "boxprior/numerics/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/losses.hpp"
#include "boxprior/numerics/ops.hpp"

namespace boxprior::numerics {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var{nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) {
    throw ShapeError("expected a scalar, got " + m.shape_string());
  }
  return m[0];
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.grad.empty()) return Matrix(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.empty()) {
    node.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](Var in) { return nodes_[in.id].requires_grad; });
  nodes_.push_back(Node{std::move(value), Matrix(), needs,
                        needs ? std::move(backward) : Backward{}});
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var output) {
  (void)scalar(output);
  for (Node& node : nodes_) node.grad = Matrix();
  if (!nodes_[output.id].requires_grad) return;
  nodes_[output.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    // Inputs always have smaller ids, so closures never touch node i.
    node.backward(*this, node.value, node.grad);
  }
}

namespace ad {
namespace {

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
  }
  return out;
}

Matrix scalar_matrix(double v) { return Matrix(1, 1, v); }

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const std::array in{a, b};
  return t.record(numerics::matmul(t.value(a), t.value(b)), in,
                  [a, b](Tape& tape, const Matrix&, const Matrix& g) {
                    if (tape.requires_grad(a)) {
                      tape.accumulate(a, numerics::matmul_transposed(g, tape.value(b)));
                    }
                    if (tape.requires_grad(b)) {
                      tape.accumulate(b, numerics::transposed_matmul(tape.value(a), g));
                    }
                  });
}

Var matmul_transposed(Tape& t, Var a, Var b) {
  const std::array in{a, b};
  return t.record(numerics::matmul_transposed(t.value(a), t.value(b)), in,
                  [a, b](Tape& tape, const Matrix&, const Matrix& g) {
                    if (tape.requires_grad(a)) {
                      tape.accumulate(a, numerics::matmul(g, tape.value(b)));
                    }
                    if (tape.requires_grad(b)) {
                      tape.accumulate(b, numerics::transposed_matmul(g, tape.value(a)));
                    }
                  });
}

Var add(Tape& t, Var a, Var b) {
  const std::array in{a, b};
  return t.record(numerics::add(t.value(a), t.value(b)), in,
                  [a, b](Tape& tape, const Matrix&, const Matrix& g) {
                    tape.accumulate(a, g);
                    tape.accumulate(b, g);
                  });
}

Var hadamard(Tape& t, Var a, Var b) {
  const std::array in{a, b};
  return t.record(numerics::hadamard(t.value(a), t.value(b)), in,
                  [a, b](Tape& tape, const Matrix&, const Matrix& g) {
                    if (tape.requires_grad(a)) {
                      tape.accumulate(a, numerics::hadamard(g, tape.value(b)));
                    }
                    if (tape.requires_grad(b)) {
                      tape.accumulate(b, numerics::hadamard(g, tape.value(a)));
                    }
                  });
}

Var scale(Tape& t, Var a, double factor) {
  const std::array in{a};
  return t.record(numerics::scale(t.value(a), factor), in,
                  [a, factor](Tape& tape, const Matrix&, const Matrix& g) {
                    tape.accumulate(a, numerics::scale(g, factor));
                  });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const std::array in{a, bias};
  return t.record(numerics::add_row_bias(t.value(a), t.value(bias)), in,
                  [a, bias](Tape& tape, const Matrix&, const Matrix& g) {
                    tape.accumulate(a, g);
                    if (tape.requires_grad(bias)) tape.accumulate(bias, column_sums(g));
                  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  std::vector<Matrix> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(t.value(p));
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(numerics::concat_cols(values), parts,
                  [inputs = std::move(inputs)](Tape& tape, const Matrix&, const Matrix& g) {
                    std::size_t offset = 0;
                    for (Var p : inputs) {
                      const std::size_t cols = tape.value(p).cols();
                      if (tape.requires_grad(p)) {
                        Matrix slice(g.rows(), cols);
                        for (std::size_t i = 0; i < g.rows(); ++i) {
                          const auto src = g.row(i).subspan(offset, cols);
                          std::copy(src.begin(), src.end(), slice.row(i).begin());
                        }
                        tape.accumulate(p, slice);
                      }
                      offset += cols;
                    }
                  });
}

Var gather_rows(Tape& t, Var a, std::span<const std::size_t> rows) {
  const std::array in{a};
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(numerics::gather_rows(t.value(a), rows), in,
                  [a, idx = std::move(idx)](Tape& tape, const Matrix&, const Matrix& g) {
                    const Matrix& src = tape.value(a);
                    Matrix scattered(src.rows(), src.cols());
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      auto dst = scattered.row(idx[i]);
                      const auto gr = g.row(i);
                      for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += gr[j];
                    }
                    tape.accumulate(a, scattered);
                  });
}

Var relu(Tape& t, Var a) {
  const std::array in{a};
  return t.record(numerics::relu(t.value(a)), in,
                  [a](Tape& tape, const Matrix&, const Matrix& g) {
                    const Matrix& x = tape.value(a);
                    Matrix d = g;
                    for (std::size_t i = 0; i < d.size(); ++i) {
                      if (!(x[i] > 0.0)) d[i] = 0.0;
                    }
                    tape.accumulate(a, d);
                  });
}

Var sigmoid(Tape& t, Var a) {
  const std::array in{a};
  return t.record(numerics::sigmoid(t.value(a)), in,
                  [a](Tape& tape, const Matrix& s, const Matrix& g) {
                    Matrix d = g;
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s[i] * (1.0 - s[i]);
                    tape.accumulate(a, d);
                  });
}

Var tanh(Tape& t, Var a) {
  const std::array in{a};
  return t.record(numerics::tanh(t.value(a)), in,
                  [a](Tape& tape, const Matrix& y, const Matrix& g) {
                    Matrix d = g;
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
                    tape.accumulate(a, d);
                  });
}

Var activation(Tape& t, Var a, Activation act) {
  switch (act) {
    case Activation::kTanh:
      return tanh(t, a);
    case Activation::kRelu:
      return relu(t, a);
    case Activation::kSigmoid:
      return sigmoid(t, a);
    case Activation::kNone:
      break;
  }
  return a;
}

Var softmax_rows(Tape& t, Var a) {
  const std::array in{a};
  return t.record(numerics::softmax_rows(t.value(a)), in,
                  [a](Tape& tape, const Matrix& s, const Matrix& g) {
                    Matrix d(s.rows(), s.cols());
                    for (std::size_t i = 0; i < s.rows(); ++i) {
                      const auto sr = s.row(i);
                      const auto gr = g.row(i);
                      double inner = 0.0;
                      for (std::size_t j = 0; j < sr.size(); ++j) inner += sr[j] * gr[j];
                      auto dr = d.row(i);
                      for (std::size_t j = 0; j < sr.size(); ++j) dr[j] = sr[j] * (gr[j] - inner);
                    }
                    tape.accumulate(a, d);
                  });
}

Var cosine_similarity(Tape& t, Var a, Var b, double epsilon) {
  const std::array in{a, b};
  const auto sims = numerics::cosine_similarity(t.value(a), t.value(b), epsilon);
  return t.record(
      Matrix::column(sims), in,
      [a, b, epsilon](Tape& tape, const Matrix& c, const Matrix& g) {
        const Matrix& av = tape.value(a);
        const Matrix& bv = tape.value(b);
        Matrix da(av.rows(), av.cols());
        Matrix db(bv.rows(), bv.cols());
        for (std::size_t i = 0; i < av.rows(); ++i) {
          const auto ar = av.row(i);
          const auto br = bv.row(i);
          double aa = 0.0;
          double bb = 0.0;
          for (std::size_t k = 0; k < ar.size(); ++k) {
            aa += ar[k] * ar[k];
            bb += br[k] * br[k];
          }
          const double na = std::sqrt(aa);
          const double nb = std::sqrt(bb);
          const double denom = na * nb;
          auto dar = da.row(i);
          auto dbr = db.row(i);
          if (denom > epsilon) {
            // d/da <a,b>/(|a||b|) = b/(|a||b|) - c a/|a|^2
            for (std::size_t k = 0; k < ar.size(); ++k) {
              dar[k] = g[i] * (br[k] / denom - c[i] * ar[k] / aa);
              dbr[k] = g[i] * (ar[k] / denom - c[i] * br[k] / bb);
            }
          } else {
            for (std::size_t k = 0; k < ar.size(); ++k) {
              dar[k] = g[i] * br[k] / epsilon;
              dbr[k] = g[i] * ar[k] / epsilon;
            }
          }
        }
        tape.accumulate(a, da);
        tape.accumulate(b, db);
      });
}

Var stop_gradient(Tape& t, Var a) { return t.constant(t.value(a)); }

Var cross_entropy(Tape& t, Var logits, std::span<const int> labels) {
  const std::array in{logits};
  const double value = numerics::cross_entropy(t.value(logits), labels);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(scalar_matrix(value), in,
                  [logits, lab = std::move(lab)](Tape& tape, const Matrix&, const Matrix& g) {
                    const Matrix& z = tape.value(logits);
                    Matrix d = numerics::softmax_rows(z);
                    const double w = g[0] / static_cast<double>(z.rows());
                    for (std::size_t i = 0; i < z.rows(); ++i) {
                      d(i, static_cast<std::size_t>(lab[i])) -= 1.0;
                    }
                    tape.accumulate(logits, numerics::scale(d, w));
                  });
}

Var kl_divergence(Tape& t, Var p, Var q) {
  const std::array in{p, q};
  const double value = numerics::kl_divergence(t.value(p), t.value(q));
  return t.record(scalar_matrix(value), in, [p, q](Tape& tape, const Matrix&, const Matrix& g) {
    const Matrix& pv = tape.value(p);
    const Matrix& qv = tape.value(q);
    const double w = g[0] / static_cast<double>(pv.rows());
    if (tape.requires_grad(p)) {
      Matrix d(pv.rows(), pv.cols());
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double pf = std::max(pv[i], kProbabilityFloor);
        const double qf = std::max(qv[i], kProbabilityFloor);
        d[i] = w * (std::log(pf) - std::log(qf) + (pv[i] > kProbabilityFloor ? 1.0 : 0.0));
      }
      tape.accumulate(p, d);
    }
    if (tape.requires_grad(q)) {
      Matrix d(qv.rows(), qv.cols());
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = qv[i] > kProbabilityFloor ? -w * pv[i] / qv[i] : 0.0;
      }
      tape.accumulate(q, d);
    }
  });
}

Var lovasz_softmax(Tape& t, Var probs, std::span<const int> labels) {
  const std::array in{probs};
  const double value = numerics::lovasz_softmax(t.value(probs), labels);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(
      scalar_matrix(value), in,
      [probs, lab = std::move(lab)](Tape& tape, const Matrix&, const Matrix& g) {
        const Matrix& pv = tape.value(probs);
        const std::size_t n = pv.rows();
        Matrix d(n, pv.cols());
        std::vector<double> errors(n);
        std::vector<double> foreground(n);
        std::vector<std::size_t> order(n);
        std::vector<double> sorted_fg(n);
        int present = 0;
        for (std::size_t c = 0; c < pv.cols(); ++c) {
          bool any = false;
          for (std::size_t i = 0; i < n; ++i) {
            foreground[i] = lab[i] == static_cast<int>(c) ? 1.0 : 0.0;
            any = any || foreground[i] > 0.0;
            errors[i] = std::abs(foreground[i] - pv(i, c));
          }
          if (!any) continue;
          ++present;
          std::iota(order.begin(), order.end(), std::size_t{0});
          std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return errors[x] > errors[y];
          });
          for (std::size_t k = 0; k < n; ++k) sorted_fg[k] = foreground[order[k]];
          const auto inc = lovasz_jaccard_increments(sorted_fg);
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = order[k];
            // error = 1 - p for the true class, p otherwise.
            d(i, c) += inc[k] * (foreground[i] > 0.0 ? -1.0 : 1.0);
          }
        }
        if (present > 0) tape.accumulate(probs, numerics::scale(d, g[0] / present));
      });
}

Var weighted_sum(Tape& t, std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) {
    throw ShapeError("weighted_sum: scalar and weight counts differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * t.scalar(scalars[i]);
  std::vector<Var> in(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.record(scalar_matrix(total), scalars,
                  [in = std::move(in), w = std::move(w)](Tape& tape, const Matrix&,
                                                         const Matrix& g) {
                    for (std::size_t i = 0; i < in.size(); ++i) {
                      tape.accumulate(in[i], scalar_matrix(g[0] * w[i]));
                    }
                  });
}

Var dot_constant(Tape& t, Var a, const Matrix& weights) {
  const Matrix& av = t.value(a);
  if (!av.same_shape(weights)) {
    throw ShapeError("dot_constant: " + av.shape_string() + " vs " + weights.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * weights[i];
  const std::array in{a};
  return t.record(scalar_matrix(total), in,
                  [a, weights](Tape& tape, const Matrix&, const Matrix& g) {
                    tape.accumulate(a, numerics::scale(weights, g[0]));
                  });
}

Var mlp(Tape& t, const MlpT<Var>& params, Var input) {
  Var x = input;
  for (const auto& layer : params.layers) {
    x = activation(t, add_row_bias(t, matmul(t, x, layer.weight), layer.bias),
                   layer.activation);
  }
  return x;
}

std::vector<Var> mlp_taps(Tape& t, const MlpT<Var>& params, Var input) {
  std::vector<Var> taps;
  Var x = input;
  for (const auto& layer : params.layers) {
    x = activation(t, add_row_bias(t, matmul(t, x, layer.weight), layer.bias),
                   layer.activation);
    taps.push_back(x);
  }
  return taps;
}

Var multihead_attention(Tape& t, const AttentionT<Var>& params, Var query,
                        Var key_scalar, Var value) {
  const Matrix& qv = t.value(query);
  const Matrix& kv = t.value(key_scalar);
  const Matrix& vv = t.value(value);
  if (kv.cols() != 1 || kv.rows() != qv.rows() || !vv.same_shape(qv)) {
    throw ShapeError("attention: query " + qv.shape_string() + ", key " +
                     kv.shape_string() + ", value " + vv.shape_string());
  }
  const std::size_t width = qv.cols();
  if (params.heads == 0 || width % params.heads != 0) {
    throw ShapeError("attention width not divisible by head count");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Var> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Var q = matmul(t, query, params.query[h]);
    const Var k = matmul(t, key_scalar, params.key[h]);
    const Var weights = softmax_rows(t, scale(t, matmul_transposed(t, q, k), inv_sqrt_d));
    heads.push_back(matmul(t, weights, matmul(t, value, params.value[h])));
  }
  return concat_cols(t, heads);
}

}  // namespace ad
}  // namespace boxprior::numerics
