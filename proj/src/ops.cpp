#include "slu/ops.hpp"

#include "slu/functional.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace slu {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename S>
std::string dims(Var<S> v) {
  return dims(v.rows(), v.cols());
}

// Half-open key range [lo, hi) a query may attend to.
std::pair<Index, Index> key_range(AttentionMask mask, Index query, Index n) {
  switch (mask) {
    case AttentionMask::kFull: return {0, n};
    case AttentionMask::kForward: return {0, query + 1};
    case AttentionMask::kBackward: return {query, n};
    case AttentionMask::kForwardStrict: return {0, query};
    case AttentionMask::kBackwardStrict: return {query + 1, n};
  }
  return {0, 0};
}

}  // namespace

bool attention_allowed(AttentionMask mask, Index query, Index key) {
  auto [lo, hi] = key_range(mask, query, std::numeric_limits<Index>::max());
  return key >= lo && key < hi;
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  require(a.cols() == b.rows(), "matmul", dims(a) + " * " + dims(b));
  Matrix<S> out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia).noalias() += grad * g.value(ib).transpose();
    if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * grad;
  });
}

template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  require(a.cols() == b.cols(), "matmul_nt", dims(a) + " * " + dims(b) + "^T");
  Matrix<S> out = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia).noalias() += grad * g.value(ib);
    if (g.needs_grad(ib)) g.grad(ib).noalias() += grad.transpose() * g.value(ia);
  });
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", dims(a) + " + " + dims(b));
  Matrix<S> out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia) += grad;
    if (g.needs_grad(ib)) g.grad(ib) += grad;
  });
}

template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", dims(a) + " - " + dims(b));
  Matrix<S> out = a.value() - b.value();
  const int ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia) += grad;
    if (g.needs_grad(ib)) g.grad(ib) -= grad;
  });
}

template <typename S>
Var<S> operator*(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", dims(a) + " .* " + dims(b));
  Matrix<S> out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia) += grad.cwiseProduct(g.value(ib));
    if (g.needs_grad(ib)) g.grad(ib) += grad.cwiseProduct(g.value(ia));
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Matrix<S> out = a.value() * factor;
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, factor](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia) += grad * factor;
  });
}

template <typename S>
Var<S> one_minus(Var<S> a) {
  Matrix<S> out = (S(1) - a.value().array()).matrix();
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia](Graph<S>& g, const Matrix<S>& grad) { g.grad(ia) -= grad; });
}

template <typename S>
Var<S> add_row(Var<S> a, Var<S> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", dims(a) + " + row " + dims(row));
  Matrix<S> out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id, ir = row.id;
  return a.graph->record(std::move(out), {a, row}, [ia, ir](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia) += grad;
    if (g.needs_grad(ir)) g.grad(ir) += grad.colwise().sum();
  });
}

template <typename S>
Var<S> mul_col(Var<S> a, Var<S> col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col", dims(a) + " .* col " + dims(col));
  Matrix<S> out = a.value().array().colwise() * col.value().col(0).array();
  const int ia = a.id, ic = col.id;
  return a.graph->record(std::move(out), {a, col}, [ia, ic](Graph<S>& g, const Matrix<S>& grad) {
    if (g.needs_grad(ia)) g.grad(ia).array() += grad.array().colwise() * g.value(ic).col(0).array();
    if (g.needs_grad(ic)) g.grad(ic) += grad.cwiseProduct(g.value(ia)).rowwise().sum();
  });
}

template <typename S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b) {
  return add_row(matmul(x, w), b);
}

template <typename S>
Var<S> tanh(Var<S> a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  const int ia = a.id;
  const int io = static_cast<int>(a.graph->size());
  return a.graph->record(std::move(out), {a}, [ia, io](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia).array() += grad.array() * (S(1) - g.value(io).array().square());
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Matrix<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  const int ia = a.id;
  const int io = static_cast<int>(a.graph->size());
  return a.graph->record(std::move(out), {a}, [ia, io](Graph<S>& g, const Matrix<S>& grad) {
    const auto y = g.value(io).array();
    g.grad(ia).array() += grad.array() * y * (S(1) - y);
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia).array() += (g.value(ia).array() > S(0)).select(grad.array(), S(0));
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", "row mismatch " + dims(p) + " vs " + std::to_string(rows));
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(c);
    c += p.cols();
  }
  return parts.front().graph->record(std::move(out), parts, [ids, offsets](Graph<S>& g, const Matrix<S>& grad) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!g.needs_grad(ids[i])) continue;
      auto& dst = g.grad(ids[i]);
      dst += grad.middleCols(offsets[i], dst.cols());
    }
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows", "column mismatch " + dims(p) + " vs " + std::to_string(cols));
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(r);
    r += p.rows();
  }
  return parts.front().graph->record(std::move(out), parts, [ids, offsets](Graph<S>& g, const Matrix<S>& grad) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!g.needs_grad(ids[i])) continue;
      auto& dst = g.grad(ids[i]);
      dst += grad.middleRows(offsets[i], dst.rows());
    }
  });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows",
          "rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + dims(a));
  Matrix<S> out = a.value().middleRows(start, count);
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, start, count](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia).middleRows(start, count) += grad;
  });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols",
          "cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + dims(a));
  Matrix<S> out = a.value().middleCols(start, count);
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, start, count](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia).middleCols(start, count) += grad;
  });
}

template <typename S>
Var<S> gather_rows(Var<S> a, std::span<const Index> index) {
  const auto& src = a.value();
  Matrix<S> out(static_cast<Index>(index.size()), src.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Index r = index[i];
    require(r < src.rows(), "gather_rows", "row " + std::to_string(r) + " of " + dims(a));
    if (r < 0) {
      out.row(static_cast<Index>(i)).setZero();
    } else {
      out.row(static_cast<Index>(i)) = src.row(r);
    }
  }
  std::vector<Index> idx(index.begin(), index.end());
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, idx = std::move(idx)](Graph<S>& g, const Matrix<S>& grad) {
    auto& dst = g.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) dst.row(idx[i]) += grad.row(static_cast<Index>(i));
    }
  });
}

template <typename S>
Var<S> sum(Var<S> a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia](Graph<S>& g, const Matrix<S>& grad) {
    g.grad(ia).array() += grad(0, 0);
  });
}

template <typename S>
Var<S> masked_softmax_rows(Var<S> a, const BoolMatrix& allowed) {
  const auto& x = a.value();
  require(allowed.rows() == x.rows() && allowed.cols() == x.cols(), "masked_softmax_rows",
          "mask " + dims(allowed.rows(), allowed.cols()) + " vs " + dims(a));
  Matrix<S> out = Matrix<S>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    S m = -std::numeric_limits<S>::infinity();
    for (Index c = 0; c < x.cols(); ++c) {
      if (allowed(r, c) && x(r, c) > m) m = x(r, c);
    }
    if (m == -std::numeric_limits<S>::infinity()) continue;
    S z = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      if (allowed(r, c)) {
        out(r, c) = std::exp(x(r, c) - m);
        z += out(r, c);
      }
    }
    out.row(r) /= z;
  }
  const int ia = a.id;
  const int io = static_cast<int>(a.graph->size());
  return a.graph->record(std::move(out), {a}, [ia, io](Graph<S>& g, const Matrix<S>& grad) {
    const auto& y = g.value(io);
    Vector<S> dot = grad.cwiseProduct(y).rowwise().sum();
    g.grad(ia).array() += y.array() * (grad.array().colwise() - dot.array());
  });
}

template <typename S>
Var<S> segment_softmax_cols(Var<S> scores, std::span<const Segment> segments) {
  const auto& x = scores.value();
  Matrix<S> out = Matrix<S>::Zero(x.rows(), x.cols());
  for (const auto& seg : segments) {
    require(seg.length > 0, "segment_softmax_cols", "empty segment (all positions masked)");
    require(seg.offset >= 0 && seg.offset + seg.length <= x.rows(), "segment_softmax_cols", "segment out of range");
    auto block = x.middleRows(seg.offset, seg.length);
    RowVector<S> m = block.colwise().maxCoeff();
    auto dst = out.middleRows(seg.offset, seg.length);
    dst = (block.rowwise() - m).array().exp().matrix();
    RowVector<S> z = dst.colwise().sum();
    dst.array().rowwise() /= z.array();
  }
  std::vector<Segment> segs(segments.begin(), segments.end());
  const int ia = scores.id;
  const int io = static_cast<int>(scores.graph->size());
  return scores.graph->record(
      std::move(out), {scores}, [ia, io, segs = std::move(segs)](Graph<S>& g, const Matrix<S>& grad) {
        const auto& y = g.value(io);
        auto& dst = g.grad(ia);
        for (const auto& seg : segs) {
          auto yb = y.middleRows(seg.offset, seg.length);
          auto gb = grad.middleRows(seg.offset, seg.length);
          RowVector<S> dot = gb.cwiseProduct(yb).colwise().sum();
          dst.middleRows(seg.offset, seg.length).array() += yb.array() * (gb.rowwise() - dot).array();
        }
      });
}

template <typename S>
Var<S> segment_sum_rows(Var<S> a, std::span<const Segment> segments) {
  const auto& x = a.value();
  Matrix<S> out(static_cast<Index>(segments.size()), x.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    require(seg.offset >= 0 && seg.offset + seg.length <= x.rows(), "segment_sum_rows", "segment out of range");
    out.row(static_cast<Index>(s)) = x.middleRows(seg.offset, seg.length).colwise().sum();
  }
  std::vector<Segment> segs(segments.begin(), segments.end());
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, segs = std::move(segs)](Graph<S>& g, const Matrix<S>& grad) {
    auto& dst = g.grad(ia);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      dst.middleRows(segs[s].offset, segs[s].length).rowwise() += grad.row(static_cast<Index>(s));
    }
  });
}

template <typename S>
Var<S> segment_max_rows(Var<S> a, std::span<const Segment> segments) {
  const auto& x = a.value();
  const Index cols = x.cols();
  Matrix<S> out(static_cast<Index>(segments.size()), cols);
  std::vector<Index> arg(segments.size() * static_cast<std::size_t>(cols));
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    require(seg.length > 0, "segment_max_rows", "empty segment");
    require(seg.offset >= 0 && seg.offset + seg.length <= x.rows(), "segment_max_rows", "segment out of range");
    for (Index c = 0; c < cols; ++c) {
      Index best = seg.offset;
      for (Index r = seg.offset + 1; r < seg.offset + seg.length; ++r) {
        if (x(r, c) > x(best, c)) best = r;
      }
      out(static_cast<Index>(s), c) = x(best, c);
      arg[s * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] = best;
    }
  }
  const int ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, cols, arg = std::move(arg)](Graph<S>& g, const Matrix<S>& grad) {
    auto& dst = g.grad(ia);
    for (Index s = 0; s < grad.rows(); ++s) {
      for (Index c = 0; c < cols; ++c) {
        dst(arg[static_cast<std::size_t>(s * cols + c)], c) += grad(s, c);
      }
    }
  });
}

template <typename S>
Var<S> unfold_windows(Var<S> x, std::span<const Segment> segments, std::span<const Index> out_lengths, int width) {
  require(width >= 1, "unfold_windows", "width must be >= 1");
  require(segments.size() == out_lengths.size(), "unfold_windows", "segments/out_lengths size mismatch");
  const auto& in = x.value();
  const Index d = in.cols();
  const Index left = width / 2;
  Index total = 0;
  for (Index n : out_lengths) total += n;
  // source[row * width + w] = input row or -1 for zero padding
  std::vector<Index> source(static_cast<std::size_t>(total * width), -1);
  Index row = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    require(seg.offset >= 0 && seg.offset + seg.length <= in.rows(), "unfold_windows", "segment out of range");
    for (Index p = 0; p < out_lengths[s]; ++p, ++row) {
      for (Index w = 0; w < width; ++w) {
        const Index q = p - left + w;
        if (q >= 0 && q < seg.length) source[static_cast<std::size_t>(row * width + w)] = seg.offset + q;
      }
    }
  }
  Matrix<S> out = Matrix<S>::Zero(total, width * d);
  for (Index r = 0; r < total; ++r) {
    for (Index w = 0; w < width; ++w) {
      const Index q = source[static_cast<std::size_t>(r * width + w)];
      if (q >= 0) out.block(r, w * d, 1, d) = in.row(q);
    }
  }
  const int ia = x.id;
  return x.graph->record(std::move(out), {x},
                         [ia, width, d, source = std::move(source)](Graph<S>& g, const Matrix<S>& grad) {
                           auto& dst = g.grad(ia);
                           for (Index r = 0; r < grad.rows(); ++r) {
                             for (Index w = 0; w < width; ++w) {
                               const Index q = source[static_cast<std::size_t>(r * width + w)];
                               if (q >= 0) dst.row(q) += grad.block(r, w * d, 1, d);
                             }
                           }
                         });
}

template <typename S>
Var<S> conv1d_same(Var<S> x, Var<S> weight, Var<S> bias, int width) {
  require(weight.rows() == width * x.cols(), "conv1d_same",
          "kernel " + dims(weight) + " incompatible with width " + std::to_string(width) + " and input " + dims(x));
  const Segment whole{0, x.rows()};
  const Index out_len = x.rows();
  return affine(unfold_windows(x, std::span<const Segment>(&whole, 1), std::span<const Index>(&out_len, 1), width),
                weight, bias);
}

template <typename S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps) {
  const auto& in = x.value();
  const Index d = in.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d, "layer_norm_rows",
          "gain/bias must be 1x" + std::to_string(d));
  Vector<S> mean = in.rowwise().mean();
  Matrix<S> centered = in.colwise() - mean;
  Vector<S> inv_std = ((centered.array().square().rowwise().sum() / S(d)) + eps).rsqrt().matrix();
  Matrix<S> normalized = centered.array().colwise() * inv_std.array();
  Matrix<S> out = (normalized.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->record(std::move(out), {x, gain, bias},
                         [ix, ig, ib, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                             Graph<S>& g, const Matrix<S>& grad) {
                           if (g.needs_grad(ig)) g.grad(ig) += grad.cwiseProduct(normalized).colwise().sum();
                           if (g.needs_grad(ib)) g.grad(ib) += grad.colwise().sum();
                           if (g.needs_grad(ix)) {
                             Matrix<S> dn = grad.array().rowwise() * g.value(ig).row(0).array();
                             Vector<S> mean_dn = dn.rowwise().sum() / S(d);
                             Vector<S> mean_dn_n = dn.cwiseProduct(normalized).rowwise().sum() / S(d);
                             Matrix<S> dx = dn.colwise() - mean_dn;
                             dx.array() -= normalized.array().colwise() * mean_dn_n.array();
                             g.grad(ix).array() += dx.array().colwise() * inv_std.array();
                           }
                         });
}

template <typename S>
Var<S> smoothed_cross_entropy(Var<S> logits, std::span<const int> gold, S epsilon) {
  const auto& x = logits.value();
  require(static_cast<Index>(gold.size()) == x.rows(), "smoothed_cross_entropy", "one gold label per row required");
  require(epsilon >= S(0) && epsilon < S(1), "smoothed_cross_entropy", "label smoothing rate must lie in [0, 1)");
  const Index k = x.cols();
  Matrix<S> dlogits = Matrix<S>::Zero(x.rows(), k);
  S loss = 0;
  const S off = epsilon / static_cast<S>(k);
  for (Index r = 0; r < x.rows(); ++r) {
    const int y = gold[static_cast<std::size_t>(r)];
    if (y < 0) continue;
    require(y < k, "smoothed_cross_entropy", "gold class " + std::to_string(y) + " out of range");
    RowVector<S> logp = log_softmax<S>(x.row(r));
    loss -= (S(1) - epsilon) * logp(y);
    if (epsilon != S(0)) loss -= off * logp.sum();
    dlogits.row(r) = logp.array().exp().matrix();
    dlogits.row(r).array() -= off;
    dlogits(r, y) -= S(1) - epsilon;
  }
  Matrix<S> out(1, 1);
  out(0, 0) = loss;
  const int ia = logits.id;
  return logits.graph->record(std::move(out), {logits},
                              [ia, dlogits = std::move(dlogits)](Graph<S>& g, const Matrix<S>& grad) {
                                g.grad(ia) += dlogits * grad(0, 0);
                              });
}

template <typename S>
Var<S> crf_nll(Var<S> emissions, Var<S> transitions, std::span<const Segment> segments, std::span<const int> tags) {
  const auto& e = emissions.value();
  const auto& trans = transitions.value();
  const Index k = e.cols();
  require(trans.rows() == k + 2 && trans.cols() == k + 2, "crf_nll", "transitions must be (K+2)x(K+2)");
  require(static_cast<Index>(tags.size()) == e.rows(), "crf_nll", "one tag per emission row required");
  Matrix<S> demis = Matrix<S>::Zero(e.rows(), k);
  Matrix<S> dtrans = Matrix<S>::Zero(k + 2, k + 2);
  S loss = 0;
  const int start = crf::start_state(static_cast<int>(k));
  const int stop = crf::stop_state(static_cast<int>(k));
  for (const auto& seg : segments) {
    require(seg.length > 0, "crf_nll", "empty sequence");
    auto block = e.middleRows(seg.offset, seg.length);
    auto seq_tags = tags.subspan(static_cast<std::size_t>(seg.offset), static_cast<std::size_t>(seg.length));
    auto m = crf::marginals<S>(block, trans);
    loss += m.log_z - crf::sequence_score<S>(block, trans, seq_tags);
    demis.middleRows(seg.offset, seg.length) += m.unary;
    dtrans += m.pairwise;
    dtrans(start, seq_tags[0]) -= S(1);
    for (Index t = 0; t < seg.length; ++t) {
      demis(seg.offset + t, seq_tags[static_cast<std::size_t>(t)]) -= S(1);
      if (t > 0) dtrans(seq_tags[static_cast<std::size_t>(t - 1)], seq_tags[static_cast<std::size_t>(t)]) -= S(1);
    }
    dtrans(seq_tags.back(), stop) -= S(1);
  }
  Matrix<S> out(1, 1);
  out(0, 0) = loss;
  const int ie = emissions.id, it = transitions.id;
  return emissions.graph->record(
      std::move(out), {emissions, transitions},
      [ie, it, demis = std::move(demis), dtrans = std::move(dtrans)](Graph<S>& g, const Matrix<S>& grad) {
        if (g.needs_grad(ie)) g.grad(ie) += demis * grad(0, 0);
        if (g.needs_grad(it)) g.grad(it) += dtrans * grad(0, 0);
      });
}

template <typename S>
Var<S> multidim_attention(Var<S> q, Var<S> k, Var<S> v, AttentionMask mask, S c) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  require(qv.rows() == kv.rows() && qv.cols() == kv.cols() && vv.rows() == kv.rows() && vv.cols() == kv.cols(),
          "multidim_attention", "q/k/v must share one shape");
  const Index n = qv.rows();
  const Index d = qv.cols();
  Matrix<S> out = Matrix<S>::Zero(n, d);
  // Per query: tanh values and weights over its key range.
  std::vector<Matrix<S>> tanh_vals(static_cast<std::size_t>(n));
  std::vector<Matrix<S>> weights(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto [lo, hi] = key_range(mask, i, n);
    if (hi <= lo) continue;
    Matrix<S> z = ((kv.middleRows(lo, hi - lo).rowwise() + qv.row(i)) / c).array().tanh().matrix();
    Matrix<S> s = z * c;
    RowVector<S> m = s.colwise().maxCoeff();
    Matrix<S> p = (s.rowwise() - m).array().exp().matrix();
    RowVector<S> zsum = p.colwise().sum();
    p.array().rowwise() /= zsum.array();
    out.row(i) = p.cwiseProduct(vv.middleRows(lo, hi - lo)).colwise().sum();
    tanh_vals[static_cast<std::size_t>(i)] = std::move(z);
    weights[static_cast<std::size_t>(i)] = std::move(p);
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.graph->record(std::move(out), {q, k, v},
                         [iq, ik, iv, mask, n, d, tanh_vals = std::move(tanh_vals), weights = std::move(weights)](
                             Graph<S>& g, const Matrix<S>& grad) {
                           const auto& vv = g.value(iv);
                           Matrix<S> dq = Matrix<S>::Zero(n, d);
                           Matrix<S> dk = Matrix<S>::Zero(n, d);
                           Matrix<S> dv = Matrix<S>::Zero(n, d);
                           for (Index i = 0; i < n; ++i) {
                             auto [lo, hi] = key_range(mask, i, n);
                             if (hi <= lo) continue;
                             const auto& p = weights[static_cast<std::size_t>(i)];
                             const auto& z = tanh_vals[static_cast<std::size_t>(i)];
                             auto gi = grad.row(i);
                             dv.middleRows(lo, hi - lo) += (p.array().rowwise() * gi.array()).matrix();
                             Matrix<S> dp = vv.middleRows(lo, hi - lo).array().rowwise() * gi.array();
                             RowVector<S> dot = dp.cwiseProduct(p).colwise().sum();
                             Matrix<S> ds = p.array() * (dp.rowwise() - dot).array();
                             Matrix<S> dz = ds.array() * (S(1) - z.array().square());
                             dq.row(i) += dz.colwise().sum();
                             dk.middleRows(lo, hi - lo) += dz;
                           }
                           if (g.needs_grad(iq)) g.grad(iq) += dq;
                           if (g.needs_grad(ik)) g.grad(ik) += dk;
                           if (g.needs_grad(iv)) g.grad(iv) += dv;
                         });
}

template <typename S>
Matrix<S> dropout_mask(Index rows, Index cols, double keep, Rng& rng) {
  Matrix<S> mask(rows, cols);
  const S scale_up = static_cast<S>(1.0 / keep);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(keep) ? scale_up : S(0);
  return mask;
}

template <typename S>
Var<S> dropout(Var<S> x, double keep, Rng& rng) {
  if (keep >= 1.0) return x;
  require(keep > 0.0, "dropout", "keep probability must be in (0, 1]");
  Var<S> mask = x.graph->constant(dropout_mask<S>(x.rows(), x.cols(), keep, rng));
  return x * mask;
}

#define SLU_INSTANTIATE(S)                                                                                       \
  template Var<S> matmul<S>(Var<S>, Var<S>);                                                                    \
  template Var<S> matmul_nt<S>(Var<S>, Var<S>);                                                                 \
  template Var<S> operator+ <S>(Var<S>, Var<S>);                                                                \
  template Var<S> operator- <S>(Var<S>, Var<S>);                                                                \
  template Var<S> operator* <S>(Var<S>, Var<S>);                                                                \
  template Var<S> scale<S>(Var<S>, S);                                                                          \
  template Var<S> one_minus<S>(Var<S>);                                                                         \
  template Var<S> add_row<S>(Var<S>, Var<S>);                                                                   \
  template Var<S> mul_col<S>(Var<S>, Var<S>);                                                                   \
  template Var<S> affine<S>(Var<S>, Var<S>, Var<S>);                                                            \
  template Var<S> tanh<S>(Var<S>);                                                                              \
  template Var<S> sigmoid<S>(Var<S>);                                                                           \
  template Var<S> relu<S>(Var<S>);                                                                              \
  template Var<S> concat_cols<S>(const std::vector<Var<S>>&);                                                   \
  template Var<S> concat_rows<S>(const std::vector<Var<S>>&);                                                   \
  template Var<S> slice_rows<S>(Var<S>, Index, Index);                                                          \
  template Var<S> slice_cols<S>(Var<S>, Index, Index);                                                          \
  template Var<S> gather_rows<S>(Var<S>, std::span<const Index>);                                               \
  template Var<S> sum<S>(Var<S>);                                                                               \
  template Var<S> masked_softmax_rows<S>(Var<S>, const BoolMatrix&);                                            \
  template Var<S> segment_softmax_cols<S>(Var<S>, std::span<const Segment>);                                    \
  template Var<S> segment_sum_rows<S>(Var<S>, std::span<const Segment>);                                        \
  template Var<S> segment_max_rows<S>(Var<S>, std::span<const Segment>);                                        \
  template Var<S> unfold_windows<S>(Var<S>, std::span<const Segment>, std::span<const Index>, int);             \
  template Var<S> conv1d_same<S>(Var<S>, Var<S>, Var<S>, int);                                                  \
  template Var<S> layer_norm_rows<S>(Var<S>, Var<S>, Var<S>, S);                                                \
  template Var<S> smoothed_cross_entropy<S>(Var<S>, std::span<const int>, S);                                   \
  template Var<S> crf_nll<S>(Var<S>, Var<S>, std::span<const Segment>, std::span<const int>);                   \
  template Var<S> multidim_attention<S>(Var<S>, Var<S>, Var<S>, AttentionMask, S);                              \
  template Matrix<S> dropout_mask<S>(Index, Index, double, Rng&);                                               \
  template Var<S> dropout<S>(Var<S>, double, Rng&);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
