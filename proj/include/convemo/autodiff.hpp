#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "convemo/errors.hpp"
#include "convemo/rng.hpp"
#include "convemo/types.hpp"

namespace convemo::ad {

// Reverse-mode autodiff over dense matrices. Every intermediate lives on the
// tape; backward() replays the recorded closures newest-to-oldest and
// accumulates gradients into each node. Build a fresh tape per training step.
//
// Templated on the scalar so training can run in float while gradient checks
// instantiate double (finite differences need the headroom).
template <typename S>
class Tape {
 public:
  using Mat = MatX<S>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  // Leaf with gradient tracking (parameters, differentiable inputs).
  Var leaf(const Mat& value) { return push(value, true, {}); }

  // Value that never receives a gradient (inputs, adjacency, masks,
  // frozen-teacher embeddings).
  Var constant(const Mat& value) { return push(value, false, {}); }

  const Mat& value(Var v) const { return node(v).value; }

  // Zero until backward() has run.
  const Mat& grad(Var v) {
    ensure_grad(v.id);
    return node(v).grad;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ----

  Var add(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.rows() == bv.rows() && av.cols() == bv.cols(),
            "add: shape mismatch");
    return binary(a, b, av + bv, [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Var scale(Var a, S k) {
    return unary(a, value(a) * k,
                 [this, a, k](const Mat& g) { accumulate(a, (g * k).eval()); });
  }

  // x: n×c, bias: 1×c broadcast over rows.
  Var add_row_bias(Var x, Var bias) {
    const Mat& xv = value(x);
    const Mat& bv = value(bias);
    require(bv.rows() == 1 && bv.cols() == xv.cols(),
            "add_row_bias: bias must be a 1-row matrix matching columns");
    Mat out = xv;
    out.rowwise() += bv.row(0);
    return binary(x, bias, out, [this, x, bias](const Mat& g) {
      accumulate(x, g);
      accumulate(bias, Mat(g.colwise().sum()));
    });
  }

  Var matmul(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.cols() == bv.rows(), "matmul: inner dimensions differ");
    return binary(a, b, av * bv, [this, a, b](const Mat& g) {
      if (node(a).requires_grad) accumulate(a, Mat(g * value(b).transpose()));
      if (node(b).requires_grad) accumulate(b, Mat(value(a).transpose() * g));
    });
  }

  // a * b^T without materializing the transpose on the tape.
  Var matmul_nt(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.cols() == bv.cols(), "matmul_nt: column counts differ");
    return binary(a, b, av * bv.transpose(), [this, a, b](const Mat& g) {
      if (node(a).requires_grad) accumulate(a, Mat(g * value(b)));
      if (node(b).requires_grad) accumulate(b, Mat(g.transpose() * value(a)));
    });
  }

  Var hadamard(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.rows() == bv.rows() && av.cols() == bv.cols(),
            "hadamard: shape mismatch");
    return binary(a, b, av.cwiseProduct(bv), [this, a, b](const Mat& g) {
      if (node(a).requires_grad) accumulate(a, Mat(g.cwiseProduct(value(b))));
      if (node(b).requires_grad) accumulate(b, Mat(g.cwiseProduct(value(a))));
    });
  }

  // Sum of all entries, as a 1×1 value.
  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return unary(a, out, [this, a](const Mat& g) {
      accumulate(
          a, Mat(Mat::Constant(value(a).rows(), value(a).cols(), g(0, 0))));
    });
  }

  Var relu(Var a) {
    const Mat& av = value(a);
    Mat out = av.cwiseMax(S(0));
    return unary(a, out, [this, a](const Mat& g) {
      const Mat& av = value(a);
      Mat masked =
          ((av.array() > S(0)).template cast<S>() * g.array()).matrix();
      accumulate(a, masked);
    });
  }

  Var concat_cols(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.rows() == bv.rows(), "concat_cols: row counts differ");
    Mat out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const Eigen::Index ac = av.cols();
    const Eigen::Index bc = bv.cols();
    return binary(a, b, out, [this, a, b, ac, bc](const Mat& g) {
      accumulate(a, Mat(g.leftCols(ac)));
      accumulate(b, Mat(g.rightCols(bc)));
    });
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    const Mat& av = value(a);
    require(start >= 0 && count >= 0 && start + count <= av.cols(),
            "slice_cols: range out of bounds");
    return unary(a, Mat(av.middleCols(start, count)),
                 [this, a, start, count](const Mat& g) {
                   if (!node(a).requires_grad) return;
                   Mat full = Mat::Zero(value(a).rows(), value(a).cols());
                   full.middleCols(start, count) = g;
                   accumulate(a, full);
                 });
  }

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    const Mat& av = value(a);
    require(start >= 0 && count >= 0 && start + count <= av.rows(),
            "slice_rows: range out of bounds");
    return unary(a, Mat(av.middleRows(start, count)),
                 [this, a, start, count](const Mat& g) {
                   if (!node(a).requires_grad) return;
                   Mat full = Mat::Zero(value(a).rows(), value(a).cols());
                   full.middleRows(start, count) = g;
                   accumulate(a, full);
                 });
  }

  Var softmax_rows(Var a) {
    const Mat& av = value(a);
    Mat out(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      const S mx = av.row(i).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (av.row(i).array() - mx).exp();
      out.row(i) = (e / e.sum()).matrix();
    }
    Var v = unary(a, out, {});
    if (node(v).requires_grad) {
      node(v).backward = [this, a, v](const Mat& g) {
        const Mat& y = value(v);
        Mat dx(y.rows(), y.cols());
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          const S dot = (y.row(i).array() * g.row(i).array()).sum();
          dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
        }
        accumulate(a, dx);
      };
    }
    return v;
  }

  // Per-row normalization with learned gain/shift (gamma, beta are 1×c).
  Var layer_norm(Var x, Var gamma, Var beta, S eps) {
    const Mat& xv = value(x);
    const Mat& gv = value(gamma);
    const Mat& bv = value(beta);
    require(gv.rows() == 1 && gv.cols() == xv.cols() && bv.rows() == 1 &&
                bv.cols() == xv.cols(),
            "layer_norm: gamma/beta must be 1-row matrices matching columns");
    const Eigen::Index n = xv.rows(), c = xv.cols();
    Mat xhat(n, c);
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_sd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mu = xv.row(i).mean();
      Eigen::Array<S, 1, Eigen::Dynamic> d = xv.row(i).array() - mu;
      const S var = d.square().mean();
      const S s = S(1) / std::sqrt(var + eps);
      inv_sd(i) = s;
      xhat.row(i) = (d * s).matrix();
    }
    Mat out(n, c);
    for (Eigen::Index i = 0; i < n; ++i)
      out.row(i) =
          (xhat.row(i).array() * gv.row(0).array() + bv.row(0).array())
              .matrix();
    const bool rg = node(x).requires_grad || node(gamma).requires_grad ||
                    node(beta).requires_grad;
    Var v = push(out, rg, {});
    if (rg) {
      node(v).backward = [this, x, gamma, beta, xhat, inv_sd](const Mat& g) {
        const Mat& gv = value(gamma);
        if (node(gamma).requires_grad)
          accumulate(gamma,
                     Mat((g.array() * xhat.array()).colwise().sum().matrix()));
        if (node(beta).requires_grad) accumulate(beta, Mat(g.colwise().sum()));
        if (!node(x).requires_grad) return;
        const Eigen::Index n = g.rows(), c = g.cols();
        Mat dx(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
          Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
              g.row(i).array() * gv.row(0).array();
          const S m1 = dxhat.mean();
          const S m2 = (dxhat * xhat.row(i).array()).mean();
          dx.row(i) =
              (inv_sd(i) * (dxhat - m1 - xhat.row(i).array() * m2)).matrix();
        }
        accumulate(x, dx);
      };
    }
    return v;
  }

  // Inverted dropout. Draws one uniform per element, row-major, but only
  // when active (train && rate > 0) so eval and rate-0 runs consume no
  // randomness.
  Var dropout(Var x, double rate, RandomStream* rng, bool train) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
    if (!train || rate == 0.0) return x;
    require(rng != nullptr, "dropout: active dropout needs an rng");
    const Mat& xv = value(x);
    Mat keep(xv.rows(), xv.cols());
    const S inv_keep = S(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
      for (Eigen::Index j = 0; j < xv.cols(); ++j)
        keep(i, j) = rng->u01() >= rate ? inv_keep : S(0);
    return unary(x, Mat(xv.cwiseProduct(keep)), [this, x, keep](const Mat& g) {
      accumulate(x, Mat(g.cwiseProduct(keep)));
    });
  }

  // ---- losses (produce 1×1 values) ----

  // Mean over rows of -log softmax(row)[label].
  Var cross_entropy_mean(Var logits, const std::vector<int>& labels) {
    const Mat& lv = value(logits);
    require(static_cast<std::size_t>(lv.rows()) == labels.size(),
            "cross_entropy_mean: one label per row required");
    require(lv.rows() > 0, "cross_entropy_mean: empty batch");
    const Eigen::Index n = lv.rows();
    Mat probs(lv.rows(), lv.cols());
    S total = S(0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int label = labels[static_cast<std::size_t>(i)];
      require(label >= 0 && label < lv.cols(),
              "cross_entropy_mean: label out of range");
      const S mx = lv.row(i).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (lv.row(i).array() - mx).exp();
      const S z = e.sum();
      probs.row(i) = (e / z).matrix();
      total += std::log(z) + mx - lv(i, label);
    }
    Mat out(1, 1);
    out(0, 0) = total / S(n);
    return unary(logits, out, [this, logits, probs, labels, n](const Mat& g) {
      Mat dl = probs;
      for (Eigen::Index i = 0; i < n; ++i)
        dl(i, labels[static_cast<std::size_t>(i)]) -= S(1);
      accumulate(logits, Mat(dl * (g(0, 0) / S(n))));
    });
  }

  // Mean over rows of max(|x_i - pos_i|_p - |x_i - neg_i|_p + margin, 0).
  // pos/neg are plain matrices (no gradient flows into them); rows align
  // with x's rows.
  Var triplet_mean(Var x, const Mat& pos, const Mat& neg, S margin, double p) {
    const Mat& xv = value(x);
    require(pos.rows() == xv.rows() && pos.cols() == xv.cols() &&
                neg.rows() == xv.rows() && neg.cols() == xv.cols(),
            "triplet_mean: anchor/positive/negative shapes differ");
    require(xv.rows() > 0, "triplet_mean: empty batch");
    require(margin >= S(0), "triplet_mean: margin must be >= 0");
    require(p >= 1.0, "triplet_mean: p must be >= 1");
    const Eigen::Index n = xv.rows();
    S total = S(0);
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S dp = row_p_norm(Mat(xv.row(i) - pos.row(i)), p);
      const S dn = row_p_norm(Mat(xv.row(i) - neg.row(i)), p);
      const S h = dp - dn + margin;
      if (h > S(0)) {
        total += h;
        active[static_cast<std::size_t>(i)] = true;
      }
    }
    Mat out(1, 1);
    out(0, 0) = total / S(n);
    return unary(x, out, [this, x, pos, neg, p, n, active](const Mat& g) {
      const Mat& xv = value(x);
      Mat dx = Mat::Zero(xv.rows(), xv.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        dx.row(i) = p_norm_grad(Mat(xv.row(i) - pos.row(i)), p) -
                    p_norm_grad(Mat(xv.row(i) - neg.row(i)), p);
      }
      accumulate(x, Mat(dx * (g(0, 0) / S(n))));
    });
  }

  // Seeds the scalar output with gradient 1 and replays the tape backwards.
  void backward(Var loss) {
    const NodeT& out = node(loss);
    require(out.value.rows() == 1 && out.value.cols() == 1,
            "backward: loss must be a 1x1 value");
    ensure_grad(loss.id);
    nodes_[static_cast<std::size_t>(loss.id)].grad(0, 0) = S(1);
    for (int i = loss.id; i >= 0; --i) {
      NodeT& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(n.grad);
    }
  }

 private:
  using BackwardFn = std::function<void(const Mat&)>;

  struct NodeT {
    Mat value;
    Mat grad;  // allocated lazily, zero-initialized
    bool requires_grad = false;
    BackwardFn backward;
  };

  static void require(bool ok, const char* message) {
    if (!ok) throw ValidationError(message);
  }

  static S row_p_norm(const Mat& row, double p) {
    if (p == 2.0) return row.norm();
    if (p == 1.0) return row.template lpNorm<1>();
    return std::pow(row.array().abs().pow(S(p)).sum(), S(1.0 / p));
  }

  // d|v|_p / dv; subgradient 0 where the norm vanishes.
  static Mat p_norm_grad(const Mat& v, double p) {
    const S norm = row_p_norm(v, p);
    if (norm <= S(0)) return Mat::Zero(v.rows(), v.cols());
    if (p == 2.0) return v / norm;
    Mat signed_pow = v.unaryExpr([p](S x) {
      if (x == S(0)) return S(0);
      const S mag = std::pow(std::abs(x), S(p - 1.0));
      return x > S(0) ? mag : -mag;
    });
    return signed_pow / std::pow(norm, S(p - 1.0));
  }

  NodeT& node(Var v) {
    require(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(),
            "invalid tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const NodeT& node(Var v) const {
    require(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(),
            "invalid tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  void ensure_grad(int id) {
    NodeT& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0)
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }

  void accumulate(Var v, const Mat& g) {
    if (!node(v).requires_grad) return;
    ensure_grad(v.id);
    node(v).grad += g;
  }

  Var push(const Mat& value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back({value, Mat(), requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var unary(Var a, const Mat& out, BackwardFn backward) {
    const bool rg = node(a).requires_grad;
    return push(out, rg, rg ? std::move(backward) : BackwardFn{});
  }

  Var binary(Var a, Var b, const Mat& out, BackwardFn backward) {
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(out, rg, rg ? std::move(backward) : BackwardFn{});
  }

  std::vector<NodeT> nodes_;
};

}  // namespace convemo::ad
