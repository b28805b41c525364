#pragma once

// Minimal reverse-mode tape over Eigen matrices; just the ops the denoiser
// needs. Values are MatrixXd, gradients accumulate on backward().

#include <Eigen/Dense>
#include <cassert>
#include <functional>
#include <vector>

namespace comok::ad {

using Mat = Eigen::MatrixXd;

class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;
  };

  int leaf(Mat v) {
    nodes_.push_back({std::move(v), Mat()});
    backops_.emplace_back(nullptr);
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Mat& val(int i) const { return nodes_[i].val; }
  Mat& grad(int i) { return nodes_[i].grad; }

  // a * b
  int matmul(int a, int b) {
    const int out = leaf(nodes_[a].val * nodes_[b].val);
    backops_.back() = [this, a, b, out]() {
      acc(a, nodes_[out].grad * nodes_[b].val.transpose());
      acc(b, nodes_[a].val.transpose() * nodes_[out].grad);
    };
    return out;
  }

  // a * b^T
  int matmul_nt(int a, int b) {
    const int out = leaf(nodes_[a].val * nodes_[b].val.transpose());
    backops_.back() = [this, a, b, out]() {
      acc(a, nodes_[out].grad * nodes_[b].val);
      acc(b, nodes_[out].grad.transpose() * nodes_[a].val);
    };
    return out;
  }

  int add(int a, int b) {
    const int out = leaf(nodes_[a].val + nodes_[b].val);
    backops_.back() = [this, a, b, out]() {
      acc(a, nodes_[out].grad);
      acc(b, nodes_[out].grad);
    };
    return out;
  }

  // rows of a plus the single-row bias
  int add_rowvec(int a, int bias) {
    Mat v = nodes_[a].val;
    v.rowwise() += nodes_[bias].val.row(0);
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, bias, out]() {
      acc(a, nodes_[out].grad);
      acc(bias, nodes_[out].grad.colwise().sum());
    };
    return out;
  }

  int tanh(int a) {
    const int out = leaf(nodes_[a].val.array().tanh().matrix());
    backops_.back() = [this, a, out]() {
      acc(a, (nodes_[out].grad.array() * (1.0 - nodes_[out].val.array().square())).matrix());
    };
    return out;
  }

  int scale(int a, double s) {
    const int out = leaf(s * nodes_[a].val);
    backops_.back() = [this, a, out, s]() { acc(a, s * nodes_[out].grad); };
    return out;
  }

  // row-wise softmax; additive masks should be folded into `a` beforehand
  int softmax_rows(int a) {
    Mat v = nodes_[a].val;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const double m = v.row(r).maxCoeff();
      v.row(r) = (v.row(r).array() - m).exp();
      v.row(r) /= v.row(r).sum();
    }
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, out]() {
      const Mat& y = nodes_[out].val;
      const Mat& gy = nodes_[out].grad;
      Mat gx(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double dot = y.row(r).dot(gy.row(r));
        gx.row(r) = (y.row(r).array() * (gy.row(r).array() - dot)).matrix();
      }
      acc(a, gx);
    };
    return out;
  }

  // scale each row i by w[i] (constant weights)
  int rowmask(int a, const Eigen::VectorXd& w) {
    Mat v = nodes_[a].val;
    for (Eigen::Index r = 0; r < v.rows(); ++r) v.row(r) *= w[r];
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, out, w]() {
      Mat g = nodes_[out].grad;
      for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) *= w[r];
      acc(a, g);
    };
    return out;
  }

  int gather_rows(int a, const std::vector<int>& idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), nodes_[a].val.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) v.row(r) = nodes_[a].val.row(idx[r]);
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, idx, out]() {
      ensure_grad(a);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        nodes_[a].grad.row(idx[r]) += nodes_[out].grad.row(r);
      }
    };
    return out;
  }

  int concat_rows(const std::vector<int>& parts) {
    Eigen::Index rows = 0;
    for (int p : parts) rows += nodes_[p].val.rows();
    Mat v(rows, nodes_[parts[0]].val.cols());
    Eigen::Index at = 0;
    for (int p : parts) {
      v.middleRows(at, nodes_[p].val.rows()) = nodes_[p].val;
      at += nodes_[p].val.rows();
    }
    const int out = leaf(std::move(v));
    backops_.back() = [this, parts, out]() {
      Eigen::Index at = 0;
      for (int p : parts) {
        acc(p, nodes_[out].grad.middleRows(at, nodes_[p].val.rows()));
        at += nodes_[p].val.rows();
      }
    };
    return out;
  }

  int concat_cols(int a, int b) {
    Mat v(nodes_[a].val.rows(), nodes_[a].val.cols() + nodes_[b].val.cols());
    v << nodes_[a].val, nodes_[b].val;
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, b, out]() {
      acc(a, nodes_[out].grad.leftCols(nodes_[a].val.cols()));
      acc(b, nodes_[out].grad.rightCols(nodes_[b].val.cols()));
    };
    return out;
  }

  // sum of squares over all entries -> 1x1
  int sq_sum(int a) {
    Mat v(1, 1);
    v(0, 0) = nodes_[a].val.squaredNorm();
    const int out = leaf(std::move(v));
    backops_.back() = [this, a, out]() { acc(a, 2.0 * nodes_[out].grad(0, 0) * nodes_[a].val); };
    return out;
  }

  void backward(int loss) {
    assert(nodes_[loss].val.size() == 1);
    for (auto& n : nodes_) n.grad = Mat();
    ensure_grad(loss);
    nodes_[loss].grad(0, 0) = 1.0;
    for (int i = static_cast<int>(backops_.size()) - 1; i >= 0; --i) {
      if (backops_[i] && nodes_[i].grad.size() != 0) backops_[i]();
    }
  }

 private:
  void ensure_grad(int i) {
    if (nodes_[i].grad.size() == 0) {
      nodes_[i].grad = Mat::Zero(nodes_[i].val.rows(), nodes_[i].val.cols());
    }
  }
  void acc(int i, const Mat& g) {
    ensure_grad(i);
    nodes_[i].grad += g;
  }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backops_;
};

}  // namespace comok::ad
