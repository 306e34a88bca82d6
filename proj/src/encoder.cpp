#include "slu/encoder.hpp"

#include "slu/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace slu {

namespace {

template <typename S>
Var<S> param(Graph<S>& g, ParameterStore<S>& store, const std::string& name) {
  return g.parameter(store.at(name));
}

template <typename S>
void add_weight(ParameterStore<S>& store, const std::string& name, Index rows, Index cols, Rng& rng) {
  init_glorot_uniform(store.add(name, {rows, cols}), rng);
}

template <typename S>
void add_bias(ParameterStore<S>& store, const std::string& name, Index cols, S value = S(0)) {
  store.add(name, {cols}).value.setConstant(value);
}

template <typename S>
void add_affine(ParameterStore<S>& store, const std::string& prefix, const char* w, const char* b, Index rows,
                Index cols, Rng& rng) {
  add_weight(store, prefix + "." + w, rows, cols, rng);
  add_bias(store, prefix + "." + b, cols);
}

template <typename S>
Var<S> linear(Graph<S>& g, ParameterStore<S>& store, const std::string& prefix, const char* w, const char* b,
              Var<S> x) {
  return affine(x, param(g, store, prefix + "." + w), param(g, store, prefix + "." + b));
}

std::string direction_name(int direction) { return direction == 0 ? "fw" : "bw"; }

bool is_rnn(EncoderKind kind) { return kind == EncoderKind::kGru || kind == EncoderKind::kHighwayLstm; }

// ---- bi-RNN -------------------------------------------------------------

template <typename S>
void init_rnn(ParameterStore<S>& store, const EncoderConfig& c, int input_dim, Rng& rng) {
  const bool lstm = c.kind == EncoderKind::kHighwayLstm;
  const Index h = c.hidden;
  const Index gates = lstm ? 4 : 3;
  Index in = input_dim;
  for (int l = 0; l < c.depth; ++l) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::string p = "encoder.l" + std::to_string(l) + "." + direction_name(dir);
      add_weight(store, p + ".wx", in, gates * h, rng);
      add_weight(store, p + ".wh", h, gates * h, rng);
      auto& b = store.add(p + ".b", {gates * h}).value;
      b.setZero();
      if (lstm) b.middleCols(h, h).setOnes();  // forget gate
      if (lstm) {
        add_affine(store, p + ".highway", "wg", "bg", in, h, rng);
        add_weight(store, p + ".highway.wp", in, h, rng);
      }
    }
    in = 2 * h;
  }
}

template <typename S>
Var<S> rnn_direction(Graph<S>& g, ParameterStore<S>& store, const EncoderConfig& c, const std::string& prefix,
                     Var<S> x, std::span<const Segment> segs, int layer, int direction, const EncoderRuntime<S>& rt) {
  const bool lstm = c.kind == EncoderKind::kHighwayLstm;
  const bool forward = direction == 0;
  const Index h = c.hidden;
  const Index batch = static_cast<Index>(segs.size());
  const Var<S> xw = linear(g, store, prefix, "wx", "b", x);
  const Var<S> wh = param(g, store, prefix + ".wh");

  std::vector<Index> order(segs.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return segs[static_cast<std::size_t>(a)].length > segs[static_cast<std::size_t>(b)].length; });
  const Index steps = segs[static_cast<std::size_t>(order.front())].length;

  const bool drop = rt.train && c.recurrent_dropout_keep < 1.0;
  Var<S> mask;
  if (drop) mask = g.constant(dropout_mask<S>(batch, h, c.recurrent_dropout_keep, *rt.rng));

  std::vector<Var<S>> outputs;
  std::vector<Index> back(static_cast<std::size_t>(x.rows()), -1);
  Var<S> h_prev, c_prev;
  Index produced = 0;
  Index active = batch;
  for (Index t = 0; t < steps; ++t) {
    while (active > 0 && segs[static_cast<std::size_t>(order[static_cast<std::size_t>(active - 1)])].length <= t) --active;
    std::vector<Index> rows(static_cast<std::size_t>(active));
    for (Index k = 0; k < active; ++k) {
      const auto& seg = segs[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      const Index pos = seg.offset + (forward ? t : seg.length - 1 - t);
      rows[static_cast<std::size_t>(k)] = pos;
      back[static_cast<std::size_t>(pos)] = produced + k;
    }
    const Var<S> xt = gather_rows(xw, std::span<const Index>(rows));
    Var<S> hp, cp, hu;
    if (t > 0) {
      hp = h_prev.rows() == active ? h_prev : slice_rows(h_prev, 0, active);
      if (lstm) cp = c_prev.rows() == active ? c_prev : slice_rows(c_prev, 0, active);
      Var<S> h_in = hp;
      if (drop) {
        const Var<S> m = slice_rows(mask, 0, active);
        if (rt.mask_probe) {
          rt.mask_probe({layer, direction, t, std::span<const Index>(order.data(), static_cast<std::size_t>(active)),
                         m.value()});
        }
        h_in = h_in * m;
      }
      hu = matmul(h_in, wh);
    } else if (drop && rt.mask_probe) {
      // The first step has no recurrent input but the mask is already fixed.
      const Matrix<S> m = mask.value().topRows(active);
      rt.mask_probe({layer, direction, t, std::span<const Index>(order.data(), static_cast<std::size_t>(active)), m});
    }
    Var<S> h_new;
    if (lstm) {
      const Var<S> pre = t > 0 ? xt + hu : xt;
      const Var<S> i = sigmoid(slice_cols(pre, 0, h));
      const Var<S> f = sigmoid(slice_cols(pre, h, h));
      const Var<S> cand = tanh(slice_cols(pre, 2 * h, h));
      const Var<S> o = sigmoid(slice_cols(pre, 3 * h, h));
      const Var<S> c_new = t > 0 ? f * cp + i * cand : i * cand;
      h_new = o * tanh(c_new);
      c_prev = c_new;
    } else {
      Var<S> zpre = slice_cols(xt, 0, h), rpre = slice_cols(xt, h, h), npre = slice_cols(xt, 2 * h, h);
      if (t > 0) {
        zpre = zpre + slice_cols(hu, 0, h);
        rpre = rpre + slice_cols(hu, h, h);
      }
      const Var<S> z = sigmoid(zpre);
      if (t > 0) npre = npre + sigmoid(rpre) * slice_cols(hu, 2 * h, h);
      const Var<S> n = tanh(npre);
      h_new = t > 0 ? one_minus(z) * n + z * hp : one_minus(z) * n;
    }
    outputs.push_back(h_new);
    h_prev = h_new;
    produced += active;
  }
  Var<S> states = gather_rows(outputs.size() == 1 ? outputs.front() : concat_rows(outputs), std::span<const Index>(back));
  if (!lstm) return states;
  const Var<S> gate = sigmoid(linear(g, store, prefix + ".highway", "wg", "bg", x));
  const Var<S> carry = matmul(x, param(g, store, prefix + ".highway.wp"));
  return gate * states + one_minus(gate) * carry;
}

template <typename S>
Var<S> encode_rnn(Graph<S>& g, ParameterStore<S>& store, const EncoderConfig& c, Var<S> x,
                  std::span<const Segment> segs, const EncoderRuntime<S>& rt) {
  for (int l = 0; l < c.depth; ++l) {
    std::vector<Var<S>> dirs;
    for (int dir = 0; dir < 2; ++dir) {
      dirs.push_back(rnn_direction(g, store, c, "encoder.l" + std::to_string(l) + "." + direction_name(dir), x, segs,
                                   l, dir, rt));
    }
    x = concat_cols(dirs);
  }
  return x;
}

// ---- multi-head attention ------------------------------------------------

template <typename S>
void init_multihead(ParameterStore<S>& store, const EncoderConfig& c, int input_dim, Rng& rng) {
  const Index d = c.d_model;
  add_affine(store, "encoder.input", "w", "b", input_dim, d, rng);
  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "encoder.l" + std::to_string(l);
    for (const char* m : {"q", "k", "v", "o"}) {
      add_affine(store, p + ".attention", (std::string("w") + m).c_str(), (std::string("b") + m).c_str(), d, d, rng);
    }
    store.add(p + ".norm1.gain", {d}).value.setOnes();
    add_bias<S>(store, p + ".norm1.bias", d);
    add_affine(store, p + ".ffn", "w1", "b1", d, c.ffn_dim, rng);
    add_affine(store, p + ".ffn", "w2", "b2", c.ffn_dim, d, rng);
    store.add(p + ".norm2.gain", {d}).value.setOnes();
    add_bias<S>(store, p + ".norm2.bias", d);
  }
}

template <typename S>
Var<S> residual(Var<S> x, Var<S> sub, const EncoderConfig& c, const EncoderRuntime<S>& rt) {
  if (rt.train && c.residual_dropout_keep < 1.0) sub = dropout(sub, c.residual_dropout_keep, *rt.rng);
  return x + sub;
}

template <typename S>
Var<S> encode_multihead(Graph<S>& g, ParameterStore<S>& store, const EncoderConfig& c, Var<S> x,
                        std::span<const Segment> segs, const EncoderRuntime<S>& rt) {
  const Index d = c.d_model;
  const Index dh = d / c.heads;
  const Index n = x.rows();
  Var<S> h = linear(g, store, "encoder.input", "w", "b", x);
  if (c.positional_encoding) h = h + g.constant(positional_encoding<S>(segs, d));

  BoolMatrix allowed = BoolMatrix::Constant(n, n, false);
  for (const auto& s : segs) allowed.block(s.offset, s.offset, s.length, s.length).setConstant(true);
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));

  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "encoder.l" + std::to_string(l);
    const Var<S> q = linear(g, store, p + ".attention", "wq", "bq", h);
    const Var<S> k = linear(g, store, p + ".attention", "wk", "bk", h);
    const Var<S> v = linear(g, store, p + ".attention", "wv", "bv", h);
    std::vector<Var<S>> heads;
    for (int hh = 0; hh < c.heads; ++hh) {
      const Var<S> scores = scale(matmul_nt(slice_cols(q, hh * dh, dh), slice_cols(k, hh * dh, dh)), inv_sqrt);
      const Var<S> weights = masked_softmax_rows(scores, allowed);
      if (rt.attention_probe) rt.attention_probe({l, hh, weights.value(), allowed});
      heads.push_back(matmul(weights, slice_cols(v, hh * dh, dh)));
    }
    const Var<S> attended =
        linear(g, store, p + ".attention", "wo", "bo", heads.size() == 1 ? heads.front() : concat_cols(heads));
    h = layer_norm_rows(residual(h, attended, c, rt), param(g, store, p + ".norm1.gain"),
                        param(g, store, p + ".norm1.bias"));
    const Var<S> ffn = linear(g, store, p + ".ffn", "w2", "b2", relu(linear(g, store, p + ".ffn", "w1", "b1", h)));
    h = layer_norm_rows(residual(h, ffn, c, rt), param(g, store, p + ".norm2.gain"),
                        param(g, store, p + ".norm2.bias"));
  }
  return h;
}

// ---- bi-block multi-dimensional attention ------------------------------------

template <typename S>
void init_biblock(ParameterStore<S>& store, const EncoderConfig& c, int input_dim, Rng& rng) {
  const Index d = c.d_model;
  for (int dir = 0; dir < 2; ++dir) {
    Index in = input_dim;
    for (int l = 0; l < c.depth; ++l) {
      const std::string p = "encoder." + direction_name(dir) + ".l" + std::to_string(l);
      add_affine(store, p + ".input", "w", "b", in, d, rng);
      add_affine(store, p + ".intra", "wq", "bq", d, d, rng);
      add_affine(store, p + ".intra", "wk", "bk", d, d, rng);
      add_affine(store, p + ".summary", "w1", "b1", d, d, rng);
      add_affine(store, p + ".summary", "w2", "b2", d, d, rng);
      add_affine(store, p + ".inter", "wq", "bq", d, d, rng);
      add_affine(store, p + ".inter", "wk", "bk", d, d, rng);
      add_affine(store, p + ".fusion", "wu", "bu", 3 * d, d, rng);
      add_affine(store, p + ".fusion", "wg", "bg", 3 * d, d, rng);
      in = d;
    }
  }
}

template <typename S>
Var<S> biblock_layer(Graph<S>& g, ParameterStore<S>& store, const EncoderConfig& c, const std::string& p, Var<S> x,
                     std::span<const Segment> segs, bool forward) {
  const S clip = static_cast<S>(c.attention_clip);
  const Var<S> xp = linear(g, store, p + ".input", "w", "b", x);
  const Var<S> q = linear(g, store, p + ".intra", "wq", "bq", xp);
  const Var<S> k = linear(g, store, p + ".intra", "wk", "bk", xp);
  const AttentionMask intra_mask = forward ? AttentionMask::kForward : AttentionMask::kBackward;
  const AttentionMask inter_mask = forward ? AttentionMask::kForwardStrict : AttentionMask::kBackwardStrict;

  // Blocks in packed order; tokens map to the block that holds them.
  std::vector<Segment> blocks;
  std::vector<std::pair<Index, Index>> seg_blocks;  // first block, count
  std::vector<Index> token_block(static_cast<std::size_t>(x.rows()));
  std::vector<Var<S>> intra;
  for (const auto& s : segs) {
    const Index first = static_cast<Index>(blocks.size());
    Index off = s.offset;
    for (Index len : block_sizes(s.length, c.blocks)) {
      for (Index r = off; r < off + len; ++r) token_block[static_cast<std::size_t>(r)] = static_cast<Index>(blocks.size());
      blocks.push_back({off, len});
      intra.push_back(multidim_attention(slice_rows(q, off, len), slice_rows(k, off, len), slice_rows(xp, off, len),
                                         intra_mask, clip));
      off += len;
    }
    seg_blocks.emplace_back(first, static_cast<Index>(blocks.size()) - first);
  }
  const Var<S> hidden = intra.size() == 1 ? intra.front() : concat_rows(intra);

  // Source-to-token summary of every block.
  const std::span<const Segment> block_span(blocks);
  const Var<S> scores = linear(g, store, p + ".summary", "w2", "b2",
                               tanh(linear(g, store, p + ".summary", "w1", "b1", hidden)));
  const Var<S> summaries = segment_sum_rows(segment_softmax_cols(scores, block_span) * hidden, block_span);

  // Blocks attend to strictly earlier (forward) or later (backward) blocks.
  // The query of block k is the summary of its neighbour k-1 (k+1), since
  // its own summary already covers tokens that follow (precede) a position.
  const Var<S> sq = linear(g, store, p + ".inter", "wq", "bq", summaries);
  const Var<S> sk = linear(g, store, p + ".inter", "wk", "bk", summaries);
  std::vector<Index> shifted(blocks.size(), -1);
  for (const auto& [first, count] : seg_blocks) {
    for (Index b = 0; b < count; ++b) {
      const Index source = forward ? b - 1 : b + 1;
      if (source >= 0 && source < count) shifted[static_cast<std::size_t>(first + b)] = first + source;
    }
  }
  const Var<S> queries = gather_rows(sq, std::span<const Index>(shifted));
  std::vector<Var<S>> inter;
  for (const auto& [first, count] : seg_blocks) {
    inter.push_back(multidim_attention(slice_rows(queries, first, count), slice_rows(sk, first, count),
                                       slice_rows(summaries, first, count), inter_mask, clip));
  }
  const Var<S> context = gather_rows(inter.size() == 1 ? inter.front() : concat_rows(inter),
                                     std::span<const Index>(token_block));

  const Var<S> fused_in = concat_cols(std::vector<Var<S>>{xp, hidden, context});
  const Var<S> update = relu(linear(g, store, p + ".fusion", "wu", "bu", fused_in));
  const Var<S> gate = sigmoid(linear(g, store, p + ".fusion", "wg", "bg", fused_in));
  return gate * update + one_minus(gate) * xp;
}

}  // namespace

std::vector<Index> block_sizes(Index length, int blocks) {
  std::vector<Index> sizes;
  const Index base = length / blocks;
  const Index extra = length % blocks;
  for (Index b = 0; b < blocks; ++b) {
    const Index n = base + (b < extra ? 1 : 0);
    if (n > 0) sizes.push_back(n);
  }
  return sizes;
}

template <typename S>
Matrix<S> positional_encoding(std::span<const Segment> segments, Index dim) {
  Index rows = 0;
  for (const auto& s : segments) rows = std::max(rows, s.offset + s.length);
  Matrix<S> pe = Matrix<S>::Zero(rows, dim);
  for (const auto& s : segments) {
    for (Index t = 0; t < s.length; ++t) {
      for (Index i = 0; i < dim; ++i) {
        const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / dim);
        pe(s.offset + t, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
  }
  return pe;
}

template <typename S>
void init_encoder(ParameterStore<S>& store, const EncoderConfig& config, int input_dim, Rng& rng) {
  config.validate();
  if (is_rnn(config.kind)) {
    init_rnn(store, config, input_dim, rng);
  } else if (config.kind == EncoderKind::kMultiHead) {
    init_multihead(store, config, input_dim, rng);
  } else {
    init_biblock(store, config, input_dim, rng);
  }
}

template <typename S>
Var<S> biblock_direction(Graph<S>& graph, ParameterStore<S>& store, const EncoderConfig& config, Var<S> inputs,
                         std::span<const Segment> segments, bool forward, const EncoderRuntime<S>&) {
  Var<S> x = inputs;
  for (int l = 0; l < config.depth; ++l) {
    x = biblock_layer(graph, store, config, "encoder." + direction_name(forward ? 0 : 1) + ".l" + std::to_string(l), x,
                      segments, forward);
  }
  return x;
}

template <typename S>
Var<S> encode(Graph<S>& graph, ParameterStore<S>& store, const EncoderConfig& config, Var<S> inputs,
              std::span<const Segment> segments, const EncoderRuntime<S>& runtime) {
  if (segments.empty()) throw std::invalid_argument("encode: empty batch");
  for (const auto& s : segments) {
    if (s.length < 1) throw std::invalid_argument("encode: utterance without tokens");
  }
  if (runtime.train && !runtime.rng) throw std::invalid_argument("encode: training needs a dropout generator");
  switch (config.kind) {
    case EncoderKind::kGru:
    case EncoderKind::kHighwayLstm:
      return encode_rnn(graph, store, config, inputs, segments, runtime);
    case EncoderKind::kMultiHead:
      return encode_multihead(graph, store, config, inputs, segments, runtime);
    case EncoderKind::kBiBlock:
      return concat_cols(std::vector<Var<S>>{
          biblock_direction(graph, store, config, inputs, segments, true, runtime),
          biblock_direction(graph, store, config, inputs, segments, false, runtime)});
  }
  throw std::logic_error("encode: unknown encoder kind");
}

template <typename S>
Matrix<S> encode_padded(ParameterStore<S>& store, const EncoderConfig& config, const Matrix<S>& padded,
                        const BoolMatrix& mask, const EncoderRuntime<S>& runtime) {
  const Index batch = mask.rows();
  const Index max_len = mask.cols();
  if (padded.rows() != batch * max_len) throw std::invalid_argument("encode_padded: rows != batch * max_len");
  std::vector<Index> rows;
  std::vector<Segment> segs;
  for (Index b = 0; b < batch; ++b) {
    const Index start = static_cast<Index>(rows.size());
    for (Index t = 0; t < max_len; ++t) {
      if (mask(b, t)) rows.push_back(b * max_len + t);
    }
    if (static_cast<Index>(rows.size()) > start) segs.push_back({start, static_cast<Index>(rows.size()) - start});
  }
  Matrix<S> packed(static_cast<Index>(rows.size()), padded.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) packed.row(static_cast<Index>(r)) = padded.row(rows[r]);
  Graph<S> g(false);
  const Var<S> out = encode(g, store, config, g.constant(std::move(packed)), std::span<const Segment>(segs), runtime);
  Matrix<S> result = Matrix<S>::Zero(padded.rows(), out.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) result.row(rows[r]) = out.value().row(static_cast<Index>(r));
  return result;
}

#define SLU_INSTANTIATE(S)                                                                                       \
  template void init_encoder<S>(ParameterStore<S>&, const EncoderConfig&, int, Rng&);                           \
  template Var<S> encode<S>(Graph<S>&, ParameterStore<S>&, const EncoderConfig&, Var<S>, std::span<const Segment>, \
                            const EncoderRuntime<S>&);                                                          \
  template Var<S> biblock_direction<S>(Graph<S>&, ParameterStore<S>&, const EncoderConfig&, Var<S>,             \
                                       std::span<const Segment>, bool, const EncoderRuntime<S>&);               \
  template Matrix<S> positional_encoding<S>(std::span<const Segment>, Index);                                   \
  template Matrix<S> encode_padded<S>(ParameterStore<S>&, const EncoderConfig&, const Matrix<S>&,              \
                                      const BoolMatrix&, const EncoderRuntime<S>&);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
