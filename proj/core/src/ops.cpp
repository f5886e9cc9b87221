// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace sparselab::ops {

namespace {

template <class T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

template <class T>
std::vector<Tensor<T>> grads(Tensor<T> a) {
  std::vector<Tensor<T>> out;
  out.push_back(std::move(a));
  return out;
}

template <class T>
std::vector<Tensor<T>> grads(Tensor<T> a, Tensor<T> b) {
  std::vector<Tensor<T>> out;
  out.reserve(2);
  out.push_back(std::move(a));
  out.push_back(std::move(b));
  return out;
}

}  // namespace

template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>* av = &a.value();
  const Tensor<T>* bv = &b.value();
  return g.record(OpKind::matmul, sparselab::matmul(*av, *bv), {a.id, b.id},
                  [av, bv](const Tensor<T>& dc) {
                    return grads(sparselab::matmul_nt(dc, *bv),
                                 sparselab::matmul_tn(*av, dc));
                  });
}

template <std::floating_point T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>* av = &a.value();
  const Tensor<T>* bv = &b.value();
  return g.record(OpKind::matmul_nt, sparselab::matmul_nt(*av, *bv), {a.id, b.id},
                  [av, bv](const Tensor<T>& dc) {
                    return grads(sparselab::matmul(dc, *bv),
                                 sparselab::matmul_tn(dc, *av));
                  });
}

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  return g.record(OpKind::add, sparselab::add(a.value(), b.value()), {a.id, b.id},
                  [](const Tensor<T>& dc) { return grads(dc, dc); });
}

template <std::floating_point T>
Var<T> subtract(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  return g.record(OpKind::subtract, sparselab::subtract(a.value(), b.value()),
                  {a.id, b.id}, [](const Tensor<T>& dc) {
                    return grads(dc, sparselab::scaled(dc, T(-1)));
                  });
}

template <std::floating_point T>
Var<T> multiply(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>* av = &a.value();
  const Tensor<T>* bv = &b.value();
  return g.record(OpKind::multiply, sparselab::hadamard(*av, *bv), {a.id, b.id},
                  [av, bv](const Tensor<T>& dc) {
                    return grads(sparselab::hadamard(dc, *bv),
                                 sparselab::hadamard(dc, *av));
                  });
}

template <std::floating_point T>
Var<T> scale(Var<T> a, std::type_identity_t<T> factor) {
  return a.graph->record(OpKind::scale, sparselab::scaled(a.value(), factor), {a.id},
                         [factor](const Tensor<T>& dc) {
                           return grads(sparselab::scaled(dc, factor));
                         });
}

template <std::floating_point T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  Graph<T>& g = graph_of(x, bias);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) +
                         " for input " + shape_string(xv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv[j];
  }
  const Shape bias_shape = bv.shape();
  return g.record(OpKind::add_bias, std::move(out), {x.id, bias.id},
                  [bias_shape](const Tensor<T>& dc) {
                    Tensor<T> db(bias_shape);
                    for (std::size_t i = 0; i < dc.rows(); ++i) {
                      auto r = dc.row(i);
                      for (std::size_t j = 0; j < r.size(); ++j) db[j] += r[j];
                    }
                    return grads(dc, std::move(db));
                  });
}

template <std::floating_point T>
Var<T> relu(Var<T> x) {
  const Tensor<T>* xv = &x.value();
  Tensor<T> out = *xv;
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  return x.graph->record(OpKind::relu, std::move(out), {x.id},
                         [xv](const Tensor<T>& dc) {
                           Tensor<T> dx = dc;
                           for (std::size_t i = 0; i < dx.size(); ++i) {
                             if (!((*xv)[i] > T(0))) dx[i] = T(0);
                           }
                           return grads(std::move(dx));
                         });
}

template <std::floating_point T>
Var<T> softmax_rows(Var<T> x) {
  Graph<T>& g = *x.graph;
  const std::size_t out_id = g.size();
  return g.record(OpKind::softmax_rows, sparselab::softmax_rows(x.value()), {x.id},
                  [&g, out_id](const Tensor<T>& dy) {
                    return grads(sparselab::softmax_rows_backward(g.value(out_id), dy));
                  });
}

template <std::floating_point T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> offset, std::type_identity_t<T> eps) {
  Graph<T>& g = graph_of(x, gain);
  graph_of(x, offset);
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || offset.value().size() != n) {
    throw DimensionError("layer_norm: gain/offset width must be " + std::to_string(n));
  }
  const Tensor<T>* gv = &gain.value();
  const Tensor<T>& bv = offset.value();

  auto normalized = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(m);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = xv.row(i);
    T mean = 0;
    for (T v : r) mean += v;
    mean /= static_cast<T>(n);
    T var = 0;
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    auto nr = normalized->row(i);
    auto orow = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      nr[j] = (r[j] - mean) * is;
      orow[j] = nr[j] * (*gv)[j] + bv[j];
    }
  }
  return g.record(
      OpKind::layer_norm, std::move(out), {x.id, gain.id, offset.id},
      [normalized, inv_std, gv, m, n](const Tensor<T>& dy) {
        Tensor<T> dx(normalized->shape());
        Tensor<T> dgain(gv->shape());
        Tensor<T> doffset(gv->shape());
        std::vector<T> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const auto dr = dy.row(i);
          const auto nr = normalized->row(i);
          T mean_d = 0, mean_dn = 0;
          for (std::size_t j = 0; j < n; ++j) {
            dgain[j] += dr[j] * nr[j];
            doffset[j] += dr[j];
            dxhat[j] = dr[j] * (*gv)[j];
            mean_d += dxhat[j];
            mean_dn += dxhat[j] * nr[j];
          }
          mean_d /= static_cast<T>(n);
          mean_dn /= static_cast<T>(n);
          auto xr = dx.row(i);
          for (std::size_t j = 0; j < n; ++j) {
            xr[j] = (*inv_std)[i] * (dxhat[j] - mean_d - nr[j] * mean_dn);
          }
        }
        std::vector<Tensor<T>> out;
        out.push_back(std::move(dx));
        out.push_back(std::move(dgain));
        out.push_back(std::move(doffset));
        return out;
      });
}

template <std::floating_point T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (count == 0 || begin + count > xv.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") of " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.cols();
  Tensor<T> out({count, n}, std::vector<T>(xv.data() + begin * n,
                                           xv.data() + (begin + count) * n));
  const Shape in_shape = xv.shape();
  return x.graph->record(OpKind::slice_rows, std::move(out), {x.id},
                         [in_shape, begin, n](const Tensor<T>& dc) {
                           Tensor<T> dx(in_shape);
                           std::copy(dc.data(), dc.data() + dc.size(),
                                     dx.data() + begin * n);
                           return grads(std::move(dx));
                         });
}

template <std::floating_point T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (count == 0 || begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") of " + shape_string(xv.shape()));
  }
  const std::size_t m = xv.rows();
  Tensor<T> out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(xv.row(i).data() + begin, count, out.row(i).data());
  }
  const Shape in_shape = xv.shape();
  return x.graph->record(OpKind::slice_cols, std::move(out), {x.id},
                         [in_shape, begin, count](const Tensor<T>& dc) {
                           Tensor<T> dx(in_shape);
                           for (std::size_t i = 0; i < dc.rows(); ++i) {
                             std::copy_n(dc.row(i).data(), count,
                                         dx.row(i).data() + begin);
                           }
                           return grads(std::move(dx));
                         });
}

template <std::floating_point T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  Graph<T>& g = *parts.front().graph;
  const std::size_t n = parts.front().value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids, row_counts;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.value().cols() != n) throw DimensionError("concat_rows: width mismatch");
    m += p.value().rows();
    ids.push_back(p.id);
    row_counts.push_back(p.value().rows());
  }
  Tensor<T> out({m, n});
  T* dst = out.data();
  for (const auto& p : parts) dst = std::copy_n(p.value().data(), p.value().size(), dst);
  return g.record(OpKind::concat_rows, std::move(out), std::move(ids),
                  [row_counts, n](const Tensor<T>& dc) {
                    std::vector<Tensor<T>> out;
                    const T* src = dc.data();
                    for (std::size_t r : row_counts) {
                      out.emplace_back(Shape{r, n}, std::vector<T>(src, src + r * n));
                      src += r * n;
                    }
                    return out;
                  });
}

template <std::floating_point T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  Graph<T>& g = *parts.front().graph;
  const std::size_t m = parts.front().value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.value().rows() != m) throw DimensionError("concat_cols: height mismatch");
    n += p.value().cols();
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
  }
  Tensor<T> out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& v = p.value();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.row(i).data(), v.cols(), out.row(i).data() + offset);
    }
    offset += v.cols();
  }
  return g.record(OpKind::concat_cols, std::move(out), std::move(ids),
                  [widths, m](const Tensor<T>& dc) {
                    std::vector<Tensor<T>> out;
                    std::size_t off = 0;
                    for (std::size_t w : widths) {
                      Tensor<T> part({m, w});
                      for (std::size_t i = 0; i < m; ++i) {
                        std::copy_n(dc.row(i).data() + off, w, part.row(i).data());
                      }
                      out.push_back(std::move(part));
                      off += w;
                    }
                    return out;
                  });
}

template <std::floating_point T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  const Tensor<T>& tv = table.value();
  const std::size_t n = tv.cols();
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  Tensor<T> out({ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) +
                           " outside table of " + std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.row(static_cast<std::size_t>(ids[i])).data(), n, out.row(i).data());
  }
  std::vector<int> saved(ids.begin(), ids.end());
  const Shape table_shape = tv.shape();
  return table.graph->record(OpKind::gather_rows, std::move(out), {table.id},
                             [saved, table_shape, n](const Tensor<T>& dc) {
                               Tensor<T> dt(table_shape);
                               for (std::size_t i = 0; i < saved.size(); ++i) {
                                 auto dst = dt.row(static_cast<std::size_t>(saved[i]));
                                 auto src = dc.row(i);
                                 for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                               }
                               return grads(std::move(dt));
                             });
}

template <std::floating_point T>
Var<T> sum(Var<T> x) {
  const Shape in_shape = x.value().shape();
  return x.graph->record(OpKind::sum, Tensor<T>({1}, sparselab::sum(x.value())), {x.id},
                         [in_shape](const Tensor<T>& dc) {
                           return grads(Tensor<T>(in_shape, dc[0]));
                         });
}

template <std::floating_point T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
  const Tensor<T>& lv = logits.value();
  const std::size_t m = lv.rows(), n = lv.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  auto probs = std::make_shared<Tensor<T>>(sparselab::softmax_rows(lv));
  T total = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= n) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) +
                           " outside " + std::to_string(n) + " classes");
    }
    const auto r = lv.row(i);
    T hi = r[0];
    for (T v : r) hi = std::max(hi, v);
    T z = 0;
    for (T v : r) z += std::exp(v - hi);
    total += hi + std::log(z) - r[static_cast<std::size_t>(targets[i])];
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: no target rows");
  const T inv = T(1) / static_cast<T>(counted);
  std::vector<int> saved(targets.begin(), targets.end());
  return logits.graph->record(
      OpKind::cross_entropy, Tensor<T>({1}, total * inv), {logits.id},
      [probs, saved, inv](const Tensor<T>& dc) {
        Tensor<T> dl(probs->shape());
        const T s = dc[0] * inv;
        for (std::size_t i = 0; i < saved.size(); ++i) {
          if (saved[i] < 0) continue;
          auto out = dl.row(i);
          const auto p = probs->row(i);
          for (std::size_t j = 0; j < out.size(); ++j) out[j] = s * p[j];
          out[static_cast<std::size_t>(saved[i])] -= s;
        }
        return grads(std::move(dl));
      });
}

#define SPARSELAB_INSTANTIATE(T)                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                         \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                      \
  template Var<T> add(Var<T>, Var<T>);                                            \
  template Var<T> subtract(Var<T>, Var<T>);                                       \
  template Var<T> multiply(Var<T>, Var<T>);                                       \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> add_bias(Var<T>, Var<T>);                                       \
  template Var<T> relu(Var<T>);                                                   \
  template Var<T> softmax_rows(Var<T>);                                           \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                          \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                   \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                   \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                        \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                        \
  template Var<T> gather_rows(Var<T>, std::span<const int>);                      \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);

SPARSELAB_INSTANTIATE(float)
SPARSELAB_INSTANTIATE(double)

#undef SPARSELAB_INSTANTIATE

}  // namespace sparselab::ops
