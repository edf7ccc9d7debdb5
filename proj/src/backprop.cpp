#include "kan/backprop.hpp"

#include <cmath>

#include <fmt/core.h>

#include "kan/errors.hpp"
#include "parallel.hpp"

namespace kan {

namespace {

struct LayerDims {
  std::size_t n_in;
  std::size_t n_out;
};

// Forward activations for the whole batch, kept for the backward sweep.
struct Activations {
  std::vector<std::vector<double>> nodes;  // per layer l: rows x n_l
  std::vector<std::vector<double>> edges;  // per layer: rows x n_out x n_in
  std::vector<double> targets;             // rows x n_out, normalized
};

void check_batch(const KanNetwork& net, const Batch& b) {
  if (b.rows == 0) throw InvalidArgument("batch is empty");
  if (b.inputs.size() != b.rows * net.n_inputs()) {
    throw ShapeError(fmt::format("batch inputs have {} values, expected {} rows x {}",
                                 b.inputs.size(), b.rows, net.n_inputs()));
  }
  if (b.targets.size() != b.rows * net.n_outputs()) {
    throw ShapeError(fmt::format("batch targets have {} values, expected {} rows x {}",
                                 b.targets.size(), b.rows, net.n_outputs()));
  }
}

class Engine {
 public:
  Engine(const KanNetwork& net, const Batch& batch, const LossWeights& w)
      : net_(net), batch_(batch), w_(w), rows_(batch.rows), n_chunks_(detail::chunk_count(rows_)) {
    check_batch(net, batch);
    for (const auto& l : net.layers()) dims_.push_back({l.n_in(), l.n_out()});
  }

  LossComponents forward() {
    const std::size_t L = dims_.size();
    act_.nodes.resize(L + 1);
    act_.edges.resize(L);
    act_.nodes[0].resize(rows_ * dims_[0].n_in);
    for (std::size_t l = 0; l < L; ++l) {
      act_.nodes[l + 1].resize(rows_ * dims_[l].n_out);
      act_.edges[l].resize(rows_ * dims_[l].n_out * dims_[l].n_in);
    }
    const std::size_t n_out = net_.n_outputs();
    act_.targets.resize(rows_ * n_out);

    // per chunk: [sq error, then per layer per edge sum |phi|]
    std::size_t stat_width = 1;
    for (const auto& d : dims_) stat_width += d.n_in * d.n_out;
    std::vector<double> stats(n_chunks_ * stat_width, 0.0);

    detail::for_each_chunk(n_chunks_, [&](std::size_t c) {
      const std::size_t r0 = c * detail::kChunkRows;
      const std::size_t r1 = std::min(rows_, r0 + detail::kChunkRows);
      double* st = &stats[c * stat_width];
      const std::size_t n0 = dims_[0].n_in;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t i = 0; i < n0; ++i) {
          act_.nodes[0][r * n0 + i] = net_.input_normalizer.apply(i, batch_.inputs[r * n0 + i]);
        }
      }
      std::size_t stat_off = 1;
      for (std::size_t l = 0; l < dims_.size(); ++l) {
        const auto& layer = net_.layers()[l];
        const auto [n_in, n_out_l] = dims_[l];
        const auto& x = act_.nodes[l];
        auto& y = act_.nodes[l + 1];
        auto& e = act_.edges[l];
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t j = 0; j < n_out_l; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n_in; ++i) {
              double v;
              try {
                v = layer.edge(j, i).eval(x[r * n_in + i]);
              } catch (const DomainError& err) {
                throw DomainError(fmt::format("layer {} edge ({},{}): {}", l, j, i, err.what()));
              }
              if (!std::isfinite(v)) {
                throw NumericalError(fmt::format(
                    "non-finite activation at layer {} edge ({},{}) for input {}", l, j, i,
                    x[r * n_in + i]));
              }
              e[(r * n_out_l + j) * n_in + i] = v;
              st[stat_off + j * n_in + i] += std::abs(v);
              acc += v;
            }
            y[r * n_out_l + j] = acc;
          }
        }
        stat_off += n_in * n_out_l;
      }
      const auto& out = act_.nodes.back();
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t j = 0; j < n_out; ++j) {
          const double t = net_.output_denormalizer.invert(j, batch_.targets[r * n_out + j]);
          act_.targets[r * n_out + j] = t;
          const double diff = out[r * n_out + j] - t;
          st[0] += diff * diff;
        }
      }
    });

    std::vector<double> total_stats(stat_width, 0.0);
    for (std::size_t c = 0; c < n_chunks_; ++c) {
      for (std::size_t k = 0; k < stat_width; ++k) total_stats[k] += stats[c * stat_width + k];
    }

    LossComponents lc;
    lc.pred = total_stats[0] / static_cast<double>(rows_ * n_out);
    reg_coef_.clear();
    std::size_t off = 1;
    const double inv_n = 1.0 / static_cast<double>(rows_);
    for (const auto& d : dims_) {
      const std::size_t m = d.n_in * d.n_out;
      std::vector<double> a(m);
      double layer_l1 = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        a[k] = total_stats[off + k] * inv_n;
        layer_l1 += a[k];
      }
      double s = 0.0;
      if (layer_l1 > 0.0) {
        for (double ak : a) {
          if (ak > 0.0) {
            const double p = ak / layer_l1;
            s -= p * std::log(p);
          }
        }
      } else {
        lc.degenerate_entropy = true;
      }
      lc.l1 += layer_l1;
      lc.entropy += s;
      // dReg/dA_k = lambda * (mu1 + mu2 * dS/dA_k), dS/dA_k = -(log p_k + S) / |Phi|_1
      std::vector<double> coef(m, 0.0);
      if (w_.lambda != 0.0) {
        for (std::size_t k = 0; k < m; ++k) {
          double ds = 0.0;
          if (layer_l1 > 0.0 && a[k] > 0.0) ds = -(std::log(a[k] / layer_l1) + s) / layer_l1;
          coef[k] = w_.lambda * (w_.mu1 + w_.mu2 * ds) * inv_n;
        }
      }
      reg_coef_.push_back(std::move(coef));
      off += m;
    }
    lc.total = lc.pred + w_.lambda * (w_.mu1 * lc.l1 + w_.mu2 * lc.entropy);
    if (!std::isfinite(lc.total)) {
      throw NumericalError(fmt::format("non-finite loss (pred={}, l1={}, entropy={})", lc.pred,
                                       lc.l1, lc.entropy));
    }
    return lc;
  }

  std::vector<double> gradient() {
    // parameter offsets per edge
    std::vector<std::vector<std::size_t>> offsets;
    std::size_t n_params = 0;
    for (const auto& layer : net_.layers()) {
      std::vector<std::size_t> o;
      for (const auto& e : layer.edges()) {
        o.push_back(n_params);
        n_params += e.parameter_count();
      }
      offsets.push_back(std::move(o));
    }
    const std::size_t n_out = net_.n_outputs();
    const double pred_scale = 2.0 / static_cast<double>(rows_ * n_out);
    std::vector<std::vector<double>> partial(n_chunks_, std::vector<double>(n_params, 0.0));

    detail::for_each_chunk(n_chunks_, [&](std::size_t c) {
      const std::size_t r0 = c * detail::kChunkRows;
      const std::size_t r1 = std::min(rows_, r0 + detail::kChunkRows);
      auto& grad = partial[c];
      std::vector<double> delta_next, delta;
      for (std::size_t r = r0; r < r1; ++r) {
        delta_next.assign(n_out, 0.0);
        for (std::size_t j = 0; j < n_out; ++j) {
          delta_next[j] =
              pred_scale * (act_.nodes.back()[r * n_out + j] - act_.targets[r * n_out + j]);
        }
        for (std::size_t l = dims_.size(); l-- > 0;) {
          const auto& layer = net_.layers()[l];
          const auto [n_in, n_out_l] = dims_[l];
          delta.assign(n_in, 0.0);
          const auto& x = act_.nodes[l];
          const auto& e = act_.edges[l];
          const auto& coef = reg_coef_[l];
          for (std::size_t j = 0; j < n_out_l; ++j) {
            for (std::size_t i = 0; i < n_in; ++i) {
              const auto& edge = layer.edge(j, i);
              if (edge.form() == EdgeForm::kZero) continue;
              const std::size_t k = j * n_in + i;
              const double v = e[r * n_out_l * n_in + k];
              const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
              const double up = delta_next[j] + coef[k] * sign;
              std::span<double> g(grad.data() + offsets[l][k], edge.parameter_count());
              delta[i] += edge.accumulate_gradient(x[r * n_in + i], up, g);
            }
          }
          delta_next.swap(delta);
        }
      }
    });

    std::vector<double> total(n_params, 0.0);
    for (const auto& p : partial) {
      for (std::size_t k = 0; k < n_params; ++k) total[k] += p[k];
    }
    for (std::size_t l = 0; l < offsets.size(); ++l) {
      const auto& layer = net_.layers()[l];
      for (std::size_t k = 0; k < offsets[l].size(); ++k) {
        const std::size_t n = layer.edges()[k].parameter_count();
        for (std::size_t q = 0; q < n; ++q) {
          if (!std::isfinite(total[offsets[l][k] + q])) {
            throw NumericalError(fmt::format("non-finite gradient at layer {} edge ({},{})", l,
                                             k / layer.n_in(), k % layer.n_in()));
          }
        }
      }
    }
    return total;
  }

 private:
  const KanNetwork& net_;
  const Batch& batch_;
  LossWeights w_;
  std::size_t rows_;
  std::size_t n_chunks_;
  std::vector<LayerDims> dims_;
  Activations act_;
  std::vector<std::vector<double>> reg_coef_;
};

}  // namespace

LossComponents evaluate_loss(const KanNetwork& net, const Batch& batch, const LossWeights& w) {
  Engine engine(net, batch, w);
  return engine.forward();
}

GradientRecord backward(const KanNetwork& net, const Batch& batch, const LossWeights& w) {
  Engine engine(net, batch, w);
  GradientRecord rec;
  rec.loss = engine.forward();
  rec.gradient = engine.gradient();
  return rec;
}

}  // namespace kan
