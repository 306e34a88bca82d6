#include "doctest.h"

#include "slu/functional.hpp"
#include "slu/grad_check.hpp"
#include "slu/ops.hpp"
#include "slu/optim.hpp"

#include <cmath>
#include <limits>

using namespace slu;

namespace {

Matrix<double> random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Tensor<double>& random_param(ParameterStore<double>& store, const std::string& name, Index r, Index c, Rng& rng) {
  auto& t = store.add(name, {r, c});
  t.value = random_matrix(r, c, rng);
  return t;
}

// Reduces an arbitrary matrix node to a scalar with fixed random weights so
// every output coordinate influences the loss differently.
Var<double> weighted_sum(Var<double> x, std::uint64_t seed) {
  Rng rng(seed);
  auto w = x.graph->constant(random_matrix(x.rows(), x.cols(), rng));
  return sum(x * w);
}

}  // namespace

TEST_CASE("softmax basics") {
  RowVector<double> zeros = RowVector<double>::Zero(3);
  auto p = softmax<double>(zeros);
  for (Index i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  RowVector<double> a(3), b(3);
  a << 1, 2, 3;
  b << 11, 12, 13;
  auto pa = softmax<double>(a);
  auto pb = softmax<double>(b);
  CHECK((pa - pb).cwiseAbs().maxCoeff() <= 1e-12);

  // mpmath reference (tests/oracles/numerics_oracle.py)
  CHECK(std::abs(pa(0) - 0.090030573170380457998) <= 1e-12);
  CHECK(std::abs(pa(1) - 0.24472847105479765247) <= 1e-12);
  CHECK(std::abs(pa(2) - 0.66524095577482188953) <= 1e-12);

  CHECK_THROWS_AS(softmax<double>(RowVector<double>()), std::invalid_argument);
}

TEST_CASE("softmax properties on random logits") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(12));
    RowVector<double> x(k);
    for (Index i = 0; i < k; ++i) x(i) = 20.0 * rng.normal();
    auto p = softmax<double>(x);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    CHECK(p.minCoeff() >= 0.0);
    const double shift = 100.0 * rng.normal();
    RowVector<double> xs = x.array() + shift;
    CHECK((softmax<double>(xs) - p).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("cross_entropy_smoothed") {
  RowVector<double> uniform = RowVector<double>::Zero(3);
  for (int gold = 0; gold < 3; ++gold) {
    CHECK(cross_entropy_smoothed<double>(uniform, gold, 0.1) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }

  RowVector<double> logits(3);
  logits << 2, 0, 0;
  // mpmath reference values
  CHECK(std::abs(cross_entropy_smoothed<double>(logits, 0, 0.1) - 0.3728780995552178382) <= 1e-12);
  CHECK(std::abs(cross_entropy_smoothed<double>(logits, 0, 0.0) - 0.23954476622188450487) <= 1e-12);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    RowVector<double> x(4);
    for (Index i = 0; i < 4; ++i) x(i) = 3.0 * rng.normal();
    const int gold = static_cast<int>(rng.below(4));
    const double plain = -log_softmax<double>(x)(gold);
    CHECK(std::abs(cross_entropy_smoothed<double>(x, gold, 0.0) - plain) <= 1e-12);
  }

  CHECK_THROWS_AS(cross_entropy_smoothed<double>(logits, 3, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy_smoothed<double>(logits, -1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy_smoothed<double>(logits, 0, 1.0), std::invalid_argument);
}

TEST_CASE("graph smoothed_cross_entropy matches the closed form") {
  Rng rng(9);
  Matrix<double> x = random_matrix(5, 4, rng, 2.0);
  std::vector<int> gold{0, 3, -1, 2, 1};
  Graph<double> g;
  auto loss = smoothed_cross_entropy(g.constant(x), std::span<const int>(gold), 0.1);
  double expected = 0;
  for (Index r = 0; r < 5; ++r) {
    if (gold[r] >= 0) expected += cross_entropy_smoothed<double>(x.row(r), gold[r], 0.1);
  }
  CHECK(std::abs(loss.item() - expected) <= 1e-12);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient on a fresh state is the identity") {
    Tensor<double> p({3, 2});
    Rng rng(1);
    p.value = random_matrix(3, 2, rng);
    const Matrix<double> before = p.value;
    AdamState<double> st;
    adam_step(p, Matrix<double>(Matrix<double>::Zero(3, 2)), st);
    CHECK(p.value == before);
    CHECK(st.t == 1);
  }
  SUBCASE("zero gradient is the identity for any state") {
    Tensor<double> p({4});
    Rng rng(2);
    p.value = random_matrix(1, 4, rng);
    AdamState<double> st;
    for (int i = 0; i < 5; ++i) adam_step(p, random_matrix(1, 4, rng), st);
    const Matrix<double> before = p.value;
    const long t = st.t;
    adam_step(p, Matrix<double>(Matrix<double>::Zero(1, 4)), st);
    CHECK(p.value == before);
    CHECK(st.t == t + 1);
  }
  SUBCASE("first bias-corrected step moves by lr against the gradient sign") {
    Tensor<double> p({1});
    p.value(0, 0) = 0.25;
    AdamState<double> st;
    Matrix<double> g(1, 1);
    g(0, 0) = 0.5;
    adam_step(p, g, st);
    CHECK(std::abs((p.value(0, 0) - 0.25) - (-0.001)) <= 1e-10);
  }
  SUBCASE("three steps on x^2 follow the reference recurrence") {
    Tensor<double> p({1});
    p.value(0, 0) = 1.0;
    AdamState<double> st;
    const double expected[3] = {0.999000000005, 0.9980000262138343, 0.9970000960651408};
    for (int i = 0; i < 3; ++i) {
      Matrix<double> g(1, 1);
      g(0, 0) = 2.0 * p.value(0, 0);
      adam_step(p, g, st);
      CHECK(std::abs(p.value(0, 0) - expected[i]) <= 1e-15);
    }
    CHECK(st.t == 3);
  }
  SUBCASE("shape mismatch") {
    Tensor<double> p({2, 2});
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(p, Matrix<double>(Matrix<double>::Zero(2, 3)), st), std::invalid_argument);
  }
}

TEST_CASE("clip_grad_norm") {
  ParameterStore<double> store;
  auto& a = store.add("a", {2});
  a.ensure_grad() << 3.0, 4.0;
  CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad.norm() == doctest::Approx(1.0));
}

TEST_CASE("grad_check harness") {
  SUBCASE("linear function is exact") {
    ParameterStore<double> store;
    auto& x = store.add("x", {1});
    x.value(0, 0) = 0.7;
    auto r = grad_check([&](Graph<double>& g) { return scale(sum(g.parameter(x)), 3.0); }, store);
    CHECK(r.max_error <= 1e-10);
    CHECK(r.coordinates == 1);
  }
  SUBCASE("cubic at x=2 with h=1e-4") {
    ParameterStore<double> store;
    auto& x = store.add("x", {1});
    x.value(0, 0) = 2.0;
    GradCheckOptions opt;
    opt.step = 1e-4;
    auto r = grad_check(
        [&](Graph<double>& g) {
          auto v = g.parameter(x);
          return sum(v * v * v);
        },
        store, opt);
    CHECK(r.max_error <= 1e-6);
  }
  SUBCASE("non-finite evaluation names the coordinate") {
    ParameterStore<double> store;
    auto& x = store.add("weights", {3});
    x.value << 1.0, 2.0, 3.0;
    auto fn = [&](Graph<double>& g) {
      auto v = g.parameter(x);
      if (x.value(0, 2) != 3.0) {
        Matrix<double> nan(1, 1);
        nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
        return sum(v) + g.constant(nan);
      }
      return sum(v);
    };
    try {
      grad_check(fn, store);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("weights[2]") != std::string::npos);
    }
  }
}

TEST_CASE("conv1d_same") {
  Rng rng(11);
  SUBCASE("identity kernel") {
    Matrix<double> x = random_matrix(5, 3, rng);
    Graph<double> g;
    auto w = g.constant(Matrix<double>::Identity(3, 3));
    auto b = g.constant(Matrix<double>::Zero(1, 3));
    auto y = conv1d_same(g.constant(x), w, b, 1);
    CHECK(y.value() == x);
  }
  SUBCASE("zero input gives the bias everywhere") {
    Graph<double> g;
    auto w = g.constant(random_matrix(3 * 2, 4, rng));
    Matrix<double> bias = random_matrix(1, 4, rng);
    auto y = conv1d_same(g.constant(Matrix<double>::Zero(6, 2)), w, g.constant(bias), 3);
    for (Index t = 0; t < 6; ++t) CHECK(y.value().row(t) == bias);
  }
  SUBCASE("matches a naive loop") {
    for (int width : {3, 4, 5}) {
      const Index T = 4, d = 3, f = 5;
      Matrix<double> x = random_matrix(T, d, rng);
      Matrix<double> w = random_matrix(width * d, f, rng);
      Matrix<double> bias = random_matrix(1, f, rng);
      Graph<double> g;
      auto y = conv1d_same(g.constant(x), g.constant(w), g.constant(bias), width);
      const Index left = width / 2;
      for (Index t = 0; t < T; ++t) {
        for (Index o = 0; o < f; ++o) {
          double acc = bias(0, o);
          for (Index k = 0; k < width; ++k) {
            const Index src = t - left + k;
            if (src < 0 || src >= T) continue;
            for (Index c = 0; c < d; ++c) acc += x(src, c) * w(k * d + c, o);
          }
          CHECK(std::abs(y.value()(t, o) - acc) <= 1e-10);
        }
      }
    }
  }
  SUBCASE("kernel shape check") {
    Graph<double> g;
    auto x = g.constant(Matrix<double>::Zero(3, 2));
    CHECK_THROWS_AS(conv1d_same(x, g.constant(Matrix<double>::Zero(5, 2)), g.constant(Matrix<double>::Zero(1, 2)), 3),
                    std::invalid_argument);
  }
}

TEST_CASE("every op passes a gradient check") {
  Rng rng(21);
  ParameterStore<double> store;
  auto& a = random_param(store, "a", 4, 3, rng);
  auto& b = random_param(store, "b", 3, 5, rng);
  auto& c = random_param(store, "c", 4, 3, rng);
  auto& row = random_param(store, "row", 1, 3, rng);
  auto& col = random_param(store, "col", 4, 1, rng);
  auto& gain = random_param(store, "gain", 1, 3, rng);
  auto& trans = random_param(store, "trans", 5, 5, rng);
  std::vector<Segment> segs{{0, 1}, {1, 3}};
  std::vector<Index> gather_idx{3, -1, 0, 0, 2};
  std::vector<int> gold{0, -1, 2, 1};
  std::vector<int> tags{1, 0, 2, 2};
  BoolMatrix allowed(4, 3);
  allowed << true, false, true, true, true, true, false, false, false, false, true, true;
  const std::vector<Index> out_len{3, 3};

  auto check = [&](const char* label, auto build) {
    CAPTURE(label);
    auto r = grad_check(
        [&](Graph<double>& g) {
          return weighted_sum(build(g), 99);
        },
        store);
    CHECK(r.max_error <= 1e-6);
  };
  auto P = [](Graph<double>& g, Tensor<double>& t) { return g.parameter(t); };

  check("matmul", [&](Graph<double>& g) { return matmul(P(g, a), P(g, b)); });
  check("matmul_nt", [&](Graph<double>& g) { return matmul_nt(P(g, a), P(g, c)); });
  check("add/sub/mul", [&](Graph<double>& g) { return (P(g, a) + P(g, c)) * (P(g, a) - P(g, c)); });
  check("scale/one_minus", [&](Graph<double>& g) { return one_minus(scale(P(g, a), 0.3)); });
  check("add_row", [&](Graph<double>& g) { return add_row(P(g, a), P(g, row)); });
  check("mul_col", [&](Graph<double>& g) { return mul_col(P(g, a), P(g, col)); });
  check("tanh/sigmoid/relu", [&](Graph<double>& g) { return tanh(P(g, a)) + sigmoid(P(g, c)) + relu(P(g, a)); });
  check("concat", [&](Graph<double>& g) {
    return concat_rows<double>({concat_cols<double>({P(g, a), P(g, c)}), concat_cols<double>({P(g, c), P(g, a)})});
  });
  check("slices", [&](Graph<double>& g) { return slice_cols(slice_rows(P(g, b), 1, 2), 2, 3); });
  check("gather_rows", [&](Graph<double>& g) { return gather_rows(P(g, a), std::span<const Index>(gather_idx)); });
  check("masked_softmax_rows", [&](Graph<double>& g) { return masked_softmax_rows(P(g, a), allowed); });
  check("segment_softmax_cols",
        [&](Graph<double>& g) { return segment_softmax_cols(P(g, a), std::span<const Segment>(segs)); });
  check("segment_sum_rows", [&](Graph<double>& g) { return segment_sum_rows(P(g, a), std::span<const Segment>(segs)); });
  check("segment_max_rows", [&](Graph<double>& g) { return segment_max_rows(P(g, a), std::span<const Segment>(segs)); });
  check("unfold_windows", [&](Graph<double>& g) {
    return unfold_windows(P(g, a), std::span<const Segment>(segs), std::span<const Index>(out_len), 4);
  });
  check("layer_norm_rows", [&](Graph<double>& g) { return layer_norm_rows(P(g, a), P(g, gain), P(g, row)); });
  check("smoothed_cross_entropy",
        [&](Graph<double>& g) { return smoothed_cross_entropy(P(g, a), std::span<const int>(gold), 0.1); });
  check("crf_nll", [&](Graph<double>& g) {
    return crf_nll(P(g, a), P(g, trans), std::span<const Segment>(segs), std::span<const int>(tags));
  });
  for (auto mask : {AttentionMask::kFull, AttentionMask::kForward, AttentionMask::kBackward,
                    AttentionMask::kForwardStrict, AttentionMask::kBackwardStrict}) {
    check("multidim_attention",
          [&](Graph<double>& g) { return multidim_attention(P(g, a), P(g, c), tanh(P(g, a)), mask, 2.0); });
  }
  check("dropout with a fixed stream", [&](Graph<double>& g) {
    Rng local(5);
    return dropout(P(g, a), 0.7, local);
  });
}

TEST_CASE("masked softmax ignores masked entries entirely") {
  Matrix<double> x(2, 3);
  x << 1, 2, 1e30, 0.5, 0.5, 0.5;
  BoolMatrix allowed(2, 3);
  allowed << true, true, false, false, false, false;
  Graph<double> g;
  auto y = masked_softmax_rows(g.constant(x), allowed);
  CHECK(y.value()(0, 2) == 0.0);
  CHECK(std::abs(y.value().row(0).sum() - 1.0) <= 1e-12);
  CHECK(y.value().row(1).isZero(0));
}

TEST_CASE("dropout is inverted and seeded") {
  Graph<double> g;
  auto x = g.constant(Matrix<double>::Ones(50, 40));
  Rng r1(4), r2(4);
  auto y1 = dropout(x, 0.8, r1);
  auto y2 = dropout(x, 0.8, r2);
  CHECK(y1.value() == y2.value());
  for (Index i = 0; i < y1.value().size(); ++i) {
    const double v = y1.value().data()[i];
    CHECK((v == 0.0 || std::abs(v - 1.25) < 1e-15));
  }
  CHECK(std::abs(y1.value().mean() - 1.0) < 0.1);
  Rng r3(4);
  CHECK(dropout(x, 1.0, r3).id == x.id);
}
