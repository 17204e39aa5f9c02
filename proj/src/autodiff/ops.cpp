#include "autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "common/error.hpp"

namespace readtwice::ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) fail(ErrorKind::kContract, "operation on an unbound Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) fail(ErrorKind::kContract, "operands live on different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorKind::kDimension, std::string(op) + ": incompatible shapes " + a.shape_string() +
                                  " and " + b.shape_string());
}

void accumulate(Tape& t, std::size_t id, const std::vector<double>& delta) {
  if (!t.requires_grad(id)) return;
  auto& g = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

// out[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* b_row = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* out_row = out + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

void check_mask(std::span<const std::uint8_t> allowed, const Tensor& a, const char* op) {
  if (!allowed.empty() && allowed.size() != a.size()) {
    fail(ErrorKind::kDimension, std::string(op) + ": mask of " + std::to_string(allowed.size()) +
                                    " flags for tensor " + a.shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) shape_error("matmul", av, bv);
  Tensor out = Tensor::matrix(m, n);
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kMatmul, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib, m, k, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      // dA = G . B^T
                      gemm_nt(g.data(), tp.value(ib).values().data(), tp.grad_buffer(ia).data(), m,
                              n, k);
                    }
                    if (tp.requires_grad(ib)) {
                      // dB = A^T . G
                      gemm_tn(tp.value(ia).values().data(), g.data(), tp.grad_buffer(ib).data(), m,
                              k, n);
                    }
                  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) shape_error("matmul_nt", av, bv);
  Tensor out = Tensor::matrix(m, n);
  gemm_nt(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kMatmulNT, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib, m, k, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      // dA = G . B
                      gemm_nn(g.data(), tp.value(ib).values().data(), tp.grad_buffer(ia).data(), m,
                              n, k);
                    }
                    if (tp.requires_grad(ib)) {
                      // dB = G^T . A
                      gemm_tn(g.data(), tp.value(ia).values().data(), tp.grad_buffer(ib).data(), m,
                              n, k);
                    }
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id;
  return t.record(Op::kTranspose, std::move(out), t.requires_grad(a),
                  [ia, r, c](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kAdd, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    accumulate(tp, ia, g);
                    accumulate(tp, ib, g);
                  });
}

Var add_broadcast(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t r = av.rows(), c = av.cols();
  enum class Mode { kScalar, kRow, kCol } mode;
  if (bv.rows() == 1 && bv.cols() == 1) {
    mode = Mode::kScalar;
  } else if (bv.rows() == 1 && bv.cols() == c) {
    mode = Mode::kRow;
  } else if (bv.rows() == r && bv.cols() == 1) {
    mode = Mode::kCol;
  } else {
    shape_error("add_broadcast", av, bv);
  }
  Tensor out = av;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) += mode == Mode::kScalar ? bv[0] : mode == Mode::kRow ? bv[j] : bv[i];
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kAddBroadcast, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib, r, c, mode](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    accumulate(tp, ia, g);
                    if (!tp.requires_grad(ib)) return;
                    auto& gb = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const double v = g[i * c + j];
                        if (mode == Mode::kScalar) gb[0] += v;
                        else if (mode == Mode::kRow) gb[j] += v;
                        else gb[i] += v;
                      }
                    }
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kSub, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    accumulate(tp, ia, g);
                    if (!tp.requires_grad(ib)) return;
                    auto& gb = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(Op::kMul, std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.requires_grad(ia)) {
                      auto& ga = tp.grad_buffer(ia);
                      const auto& bvals = tp.value(ib).values();
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bvals[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto& gb = tp.grad_buffer(ib);
                      const auto& avals = tp.value(ia).values();
                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * avals[i];
                    }
                  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ia = a.id;
  return t.record(Op::kScale, std::move(out), t.requires_grad(a),
                  [ia, factor](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
                  });
}

Var gelu(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  const std::size_t ia = a.id;
  return t.record(Op::kGelu, std::move(out), t.requires_grad(a),
                  [ia](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    const auto& x = tp.value(ia).values();
                    auto& ga = tp.grad_buffer(ia);
                    const double inv_sqrt_2pi = 0.3989422804014327;
                    for (std::size_t i = 0; i < ga.size(); ++i) {
                      const double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
                      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
                      ga[i] += g[i] * (cdf + x[i] * pdf);
                    }
                  });
}

Var softmax_rows(Var a, std::span<const std::uint8_t> allowed) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  check_mask(allowed, av, "softmax_rows");
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (allowed.empty() || allowed[i * c + j]) peak = std::max(peak, av(i, j));
    }
    if (peak == -std::numeric_limits<double>::infinity()) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (allowed.empty() || allowed[i * c + j]) {
        out(i, j) = std::exp(av(i, j) - peak);
        z += out(i, j);
      }
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  const std::size_t ia = a.id;
  return t.record(Op::kSoftmax, std::move(out), t.requires_grad(a),
                  [ia, r, c](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    const auto& y = tp.value(self).values();
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < r; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                      for (std::size_t j = 0; j < c; ++j)
                        ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                    }
                  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x, gamma);
  tape_of(x, beta);
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (c == 0) fail(ErrorKind::kDimension, "layer_norm over an empty axis");
  if (gamma.value().size() != c) shape_error("layer_norm", xv, gamma.value());
  if (beta.value().size() != c) shape_error("layer_norm", xv, beta.value());
  const auto& gv = gamma.value().values();
  const auto& bv = beta.value().values();

  auto xhat = std::make_shared<std::vector<double>>(r * c);
  auto inv_std = std::make_shared<std::vector<double>>(r);
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xv(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xv(i, j) - mu) * is;
      (*xhat)[i * c + j] = h;
      out(i, j) = gv[j] * h + bv[j];
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  const bool needs = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  return t.record(Op::kLayerNorm, std::move(out), needs,
                  [ix, ig, ib, r, c, xhat, inv_std](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    const auto& gam = tp.value(ig).values();
                    if (tp.requires_grad(ig)) {
                      auto& gg = tp.grad_buffer(ig);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          gg[j] += g[i * c + j] * (*xhat)[i * c + j];
                    }
                    if (tp.requires_grad(ib)) {
                      auto& gb = tp.grad_buffer(ib);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                    }
                    if (!tp.requires_grad(ix)) return;
                    auto& gx = tp.grad_buffer(ix);
                    const double n = static_cast<double>(c);
                    for (std::size_t i = 0; i < r; ++i) {
                      double sum_d = 0.0, sum_dx = 0.0;
                      for (std::size_t j = 0; j < c; ++j) {
                        const double d = g[i * c + j] * gam[j];
                        sum_d += d;
                        sum_dx += d * (*xhat)[i * c + j];
                      }
                      for (std::size_t j = 0; j < c; ++j) {
                        const double d = g[i * c + j] * gam[j];
                        gx[i * c + j] += (*inv_std)[i] / n *
                                         (n * d - sum_d - (*xhat)[i * c + j] * sum_dx);
                      }
                    }
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::kInvalidArgument, "concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  bool needs = false;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != r) shape_error("concat_cols", parts.front().value(), p.value());
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
    needs = needs || t.requires_grad(p);
  }
  Tensor out = Tensor::matrix(r, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  return t.record(Op::kConcatCols, std::move(out), needs,
                  [ids, widths, r, total](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      const std::size_t w = widths[k];
                      if (tp.requires_grad(ids[k])) {
                        auto& gp = tp.grad_buffer(ids[k]);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
                      }
                      off += w;
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::kInvalidArgument, "concat_rows of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t c = parts.front().cols();
  std::vector<std::size_t> ids, sizes;
  std::vector<double> values;
  bool needs = false;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.cols() != c) shape_error("concat_rows", parts.front().value(), p.value());
    const auto& v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
    ids.push_back(p.id);
    sizes.push_back(v.size());
    rows += p.rows();
    needs = needs || t.requires_grad(p);
  }
  return t.record(Op::kConcatRows, Tensor({rows, c}, std::move(values)), needs,
                  [ids, sizes](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) {
                        auto& gp = tp.grad_buffer(ids[k]);
                        for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
                      }
                      off += sizes[k];
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (begin > end || end > c) {
    fail(ErrorKind::kDimension, "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") out of " + av.shape_string());
  }
  const std::size_t w = end - begin;
  Tensor out = Tensor::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = av(i, begin + j);
  const std::size_t ia = a.id;
  return t.record(Op::kSliceCols, std::move(out), t.requires_grad(a),
                  [ia, r, c, w, begin](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  if (begin > end || end > av.rows()) {
    fail(ErrorKind::kDimension, "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") out of " + av.shape_string());
  }
  std::vector<double> values(av.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                             av.values().begin() + static_cast<std::ptrdiff_t>(end * c));
  const std::size_t ia = a.id;
  return t.record(Op::kSliceRows, Tensor({end - begin, c}, std::move(values)), t.requires_grad(a),
                  [ia, begin, c](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
                  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out = Tensor::matrix(idx.size(), c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= av.rows()) {
      fail(ErrorKind::kDimension, "gather_rows index " + std::to_string(idx[i]) + " out of " +
                                      av.shape_string());
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) = av(idx[i], j);
  }
  const std::size_t ia = a.id;
  return t.record(Op::kGatherRows, std::move(out), t.requires_grad(a),
                  [ia, idx, c](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g[i * c + j];
                  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.value();
  const std::size_t r = lv.rows(), c = lv.cols();
  if (labels.size() != r) {
    fail(ErrorKind::kDimension, "cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for logits " + lv.shape_string());
  }
  if (r == 0) fail(ErrorKind::kInvalidArgument, "cross_entropy over zero rows");
  auto probs = std::make_shared<std::vector<double>>(r * c);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (lab[i] >= c) fail(ErrorKind::kDimension, "cross_entropy label out of range");
    double peak = lv(i, 0);
    for (std::size_t j = 1; j < c; ++j) peak = std::max(peak, lv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv(i, j) - peak);
    const double log_z = peak + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(lv(i, j) - log_z);
    total += log_z - lv(i, lab[i]);
  }
  const std::size_t il = logits.id;
  return t.record(Op::kCrossEntropy, Tensor::scalar(total / static_cast<double>(r)),
                  t.requires_grad(logits), [il, lab, probs, r, c](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0] / static_cast<double>(r);
                    auto& gl = tp.grad_buffer(il);
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const double target = j == lab[i] ? 1.0 : 0.0;
                        gl[i * c + j] += g * ((*probs)[i * c + j] - target);
                      }
                    }
                  });
}

Var logsumexp(Var a, std::span<const std::uint8_t> allowed) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  check_mask(allowed, av, "logsumexp");
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (allowed.empty() || allowed[i]) peak = std::max(peak, av[i]);
  }
  if (peak == -std::numeric_limits<double>::infinity()) {
    fail(ErrorKind::kInvalidArgument, "logsumexp over an empty selection");
  }
  auto weights = std::make_shared<std::vector<double>>(av.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (allowed.empty() || allowed[i]) {
      (*weights)[i] = std::exp(av[i] - peak);
      z += (*weights)[i];
    }
  }
  for (double& w : *weights) w /= z;
  const std::size_t ia = a.id;
  return t.record(Op::kLogSumExp, Tensor::scalar(peak + std::log(z)), t.requires_grad(a),
                  [ia, weights](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (*weights)[i];
                  });
}

Var bce_with_logits(Var logits, std::span<const double> targets) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.value();
  if (targets.size() != lv.size()) {
    fail(ErrorKind::kDimension, "bce_with_logits: " + std::to_string(targets.size()) +
                                    " targets for logits " + lv.shape_string());
  }
  std::vector<double> y(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double z = lv[i];
    total += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const std::size_t il = logits.id;
  return t.record(Op::kBceWithLogits, Tensor::scalar(total), t.requires_grad(logits),
                  [il, y](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    const auto& z = tp.value(il).values();
                    auto& gl = tp.grad_buffer(il);
                    for (std::size_t i = 0; i < gl.size(); ++i) {
                      const double sig = 1.0 / (1.0 + std::exp(-z[i]));
                      gl[i] += g * (sig - y[i]);
                    }
                  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id;
  return t.record(Op::kSum, Tensor::scalar(total), t.requires_grad(a),
                  [ia](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    for (double& v : tp.grad_buffer(ia)) v += g;
                  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) fail(ErrorKind::kInvalidArgument, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += av(i, j);
  const std::size_t ia = a.id;
  return t.record(Op::kRowSum, std::move(out), t.requires_grad(a),
                  [ia, r, c](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
                  });
}

Var dropout(Var a, double rate) {
  Tape& t = tape_of(a);
  if (rate <= 0.0 || t.rng() == nullptr) return a;
  if (rate >= 1.0) fail(ErrorKind::kInvalidArgument, "dropout rate must be < 1");
  Rng& rng = *t.rng();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.value().size());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  const std::size_t ia = a.id;
  return t.record(Op::kDropout, std::move(out), t.requires_grad(a),
                  [ia, mask](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    auto& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (*mask)[i];
                  });
}

}  // namespace readtwice::ad
