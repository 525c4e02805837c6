#include <cmath>
#include <vector>

#include "doctest.h"
#include "lavender/tensor.hpp"

using namespace lavender;

namespace {

// Independent oracle: naive triple loop, accumulation order fixed.
std::vector<double> matmul_oracle(const std::vector<double>& a,
                                  const std::vector<double>& b, size_t m,
                                  size_t k, size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, bool rg = false) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (double& v : t.values()) v = rng.uniform(-1.5, 1.5);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and oracle") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(nullptr, eye, m);
  for (size_t i = 0; i < 4; ++i) CHECK(out.values()[i] == m.values()[i]);

  Tensor bad = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(matmul(nullptr, Tensor::zeros({2, 3}), bad), DimensionError);

  Rng rng(7);
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({7, 3}, rng);
  Tensor c = matmul(nullptr, a, b);
  const auto oracle =
      matmul_oracle({a.values().begin(), a.values().end()},
                    {b.values().begin(), b.values().end()}, 5, 7, 3);
  for (size_t i = 0; i < oracle.size(); ++i) {
    CHECK(std::abs(c.values()[i] - oracle[i]) < 1e-12);
  }
}

TEST_CASE("matmul_bt equals matmul of explicit transpose") {
  Rng rng(11);
  Tensor a = random_tensor({4, 6}, rng);
  Tensor b = random_tensor({5, 6}, rng);
  Tensor bt = Tensor::zeros({6, 5});
  for (size_t i = 0; i < 5; ++i) {
    for (size_t j = 0; j < 6; ++j) bt.values()[j * 5 + i] = b.values()[i * 6 + j];
  }
  Tensor lhs = matmul_bt(nullptr, a, b);
  Tensor rhs = matmul(nullptr, a, bt);
  for (size_t i = 0; i < lhs.numel(); ++i) {
    CHECK(lhs.values()[i] == doctest::Approx(rhs.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("elementwise add identity and broadcast") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor zeros = Tensor::zeros({3, 4});
  Tensor out = add(nullptr, x, zeros);
  for (size_t i = 0; i < x.numel(); ++i) CHECK(out.values()[i] == x.values()[i]);

  // bias row broadcast over leading dim
  Tensor bias = Tensor::from({4}, {1, 2, 3, 4});
  Tensor shifted = add(nullptr, x, bias);
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 4; ++j) {
      CHECK(shifted.at(i, j) == x.at(i, j) + bias.values()[j]);
    }
  }
  CHECK_THROWS_AS(add(nullptr, x, Tensor::zeros({3, 5})), DimensionError);
}

TEST_CASE("gelu fixed point and gradient vs finite difference") {
  Tensor zero = Tensor::scalar(0.0);
  CHECK(gelu(nullptr, zero).item() == 0.0);

  // central difference at x = 0.5, eps = 1e-5
  const double x0 = 0.5, eps = 1e-5;
  auto g = [](double v) {
    Tensor t = Tensor::scalar(v);
    return gelu(nullptr, t).item();
  };
  const double numeric = (g(x0 + eps) - g(x0 - eps)) / (2 * eps);
  Tape tape;
  Tensor x = Tensor::scalar(x0, true);
  Tensor y = gelu(&tape, x);
  tape.backward(y);
  CHECK(std::abs(x.grad()[0] - numeric) < 1e-6);
}

TEST_CASE("softmax symmetry, shift invariance, stability") {
  Tensor c = Tensor::full({4}, 2.5);
  Tensor sm = softmax(nullptr, c, 0);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(sm.values()[i] == doctest::Approx(0.25).epsilon(1e-12));
  }

  // shift by an integer keeps every intermediate exact -> bitwise equality
  Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0});
  Tensor xs = Tensor::from({3}, {1.0 + 1024, 2.0 + 1024, 3.0 + 1024});
  Tensor a = softmax(nullptr, x, 0);
  Tensor b = softmax(nullptr, xs, 0);
  for (size_t i = 0; i < 3; ++i) CHECK(a.values()[i] == b.values()[i]);

  Rng rng(5);
  Tensor r = random_tensor({6}, rng);
  Tensor rs = Tensor::zeros({6});
  for (size_t i = 0; i < 6; ++i) rs.values()[i] = r.values()[i] + 0.37281;
  Tensor pa = softmax(nullptr, r, 0);
  Tensor pb = softmax(nullptr, rs, 0);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(pa.values()[i] - pb.values()[i]) < 1e-12);
  }

  Tensor big = Tensor::from({2}, {1000.0, 0.0});
  Tensor pbig = softmax(nullptr, big, 0);
  CHECK(std::isfinite(pbig.values()[0]));
  CHECK(pbig.values()[0] == doctest::Approx(1.0));
  CHECK(pbig.values()[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 9}, rng);
    Tensor y = softmax(nullptr, x, 1);
    for (size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < 9; ++j) s += y.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("layer_norm constant row, statistics, gradient") {
  Tensor gain = Tensor::full({5}, 1.0);
  Tensor bias = Tensor::zeros({5});
  Tensor flat = Tensor::full({1, 5}, 3.0);
  Tensor out = layer_norm(nullptr, flat, gain, bias, 1e-9);
  for (size_t i = 0; i < 5; ++i) CHECK(out.values()[i] == 0.0);

  Rng rng(23);
  Tensor x = random_tensor({6, 16}, rng);
  Tensor g16 = Tensor::full({16}, 1.0);
  Tensor b16 = Tensor::zeros({16});
  Tensor y = layer_norm(nullptr, x, g16, b16, 1e-9);
  for (size_t i = 0; i < 6; ++i) {
    double mu = 0.0, var = 0.0;
    for (size_t j = 0; j < 16; ++j) mu += y.at(i, j);
    mu /= 16;
    for (size_t j = 0; j < 16; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    var /= 16;
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }

  Tensor probe = random_tensor({3, 8}, rng);
  auto f = [&](Tape& t, const Tensor& in) {
    Tensor gg = Tensor::from({8}, {1.3, 0.7, 1.0, -0.2, 0.5, 2.0, 1.0, 0.9});
    Tensor bb = Tensor::from({8}, {0.1, 0, -0.4, 0.2, 0, 0, 0.3, 0});
    return sum(&t, layer_norm(&t, in, gg, bb, 1e-6));
  };
  auto report = grad_check(f, probe, 1e-5, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("cross_entropy analytic values and ignore handling") {
  Tensor uniform = Tensor::zeros({1, 100});
  std::vector<int> lab{42};
  CHECK(cross_entropy(nullptr, uniform, lab).item() ==
        doctest::Approx(std::log(100.0)).epsilon(1e-12));

  Tensor sat = Tensor::zeros({1, 10});
  sat.values()[3] = 30.0;
  std::vector<int> lab3{3};
  CHECK(cross_entropy(nullptr, sat, lab3).item() < 1e-9);

  // one IGNORE position contributes nothing: compare to manual masking
  Rng rng(31);
  Tensor two = random_tensor({2, 7}, rng);
  std::vector<int> labs{kIgnoreLabel, 4};
  Tensor only = Tensor::zeros({1, 7});
  for (size_t j = 0; j < 7; ++j) only.values()[j] = two.at(1, j);
  std::vector<int> lab4{4};
  CHECK(cross_entropy(nullptr, two, labs).item() ==
        doctest::Approx(cross_entropy(nullptr, only, lab4).item()).epsilon(1e-14));

  std::vector<int> bad{7, 0};  // 7 >= V for V = 7
  CHECK_THROWS_AS(cross_entropy(nullptr, two, bad), InputError);

  // all IGNORE -> zero loss, zero gradient
  Tape tape;
  Tensor x = random_tensor({2, 7}, rng, true);
  std::vector<int> none{kIgnoreLabel, kIgnoreLabel};
  Tensor loss = cross_entropy(&tape, x, none);
  CHECK(loss.item() == 0.0);
  tape.backward(loss);
  for (const double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward fills leaves and accumulates across uses") {
  Tape tape;
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor s = sum(&tape, x);
  tape.backward(s);
  for (const double g : x.grad()) CHECK(g == 1.0);

  Tape tape2;
  Tensor y = Tensor::from({2}, {0.3, -0.7}, true);
  Tensor twice = add(&tape2, y, y);
  Tensor loss = sum(&tape2, twice);
  tape2.backward(loss);
  for (const double g : y.grad()) CHECK(g == 2.0);

  Tensor notscalar = Tensor::zeros({2, 2});
  Tape t3;
  CHECK_THROWS(t3.backward(notscalar));
}

TEST_CASE("grad accumulation scales with path count") {
  for (int k = 1; k <= 4; ++k) {
    Tape tape;
    Tensor x = Tensor::from({3}, {0.2, -0.4, 1.1}, true);
    Tensor acc = x;
    for (int i = 1; i < k; ++i) acc = add(&tape, acc, x);
    Tensor loss = sum(&tape, acc);
    tape.backward(loss);
    for (const double g : x.grad()) CHECK(g == doctest::Approx(double(k)));
  }
}

TEST_CASE("grad_check identity, composite, and mutation self-test") {
  Rng rng(41);
  Tensor x = random_tensor({7}, rng);
  auto identity = [](Tape& t, const Tensor& in) { return sum(&t, in); };
  auto id_report = grad_check(identity, x, 1e-5, 1e-4);
  CHECK(id_report.pass);
  CHECK(id_report.max_rel_err < 1e-10);

  Tensor logits = random_tensor({3, 9}, rng);
  auto composite = [](Tape& t, const Tensor& in) {
    Tensor p = softmax(&t, in, 1);
    Tensor lifted = scale(&t, p, 4.0);
    std::vector<int> labs{2, kIgnoreLabel, 8};
    return cross_entropy(&t, lifted, labs);
  };
  CHECK(grad_check(composite, logits, 1e-5, 1e-4).pass);

  // intentionally wrong backward: f reports gradient of 2x for f(x)=sum(x)
  auto broken = [](Tape& t, const Tensor& in) {
    Tensor out = sum(&t, in);
    Tensor doubled = scale(&t, out, 1.0);
    t.record("broken", [in]() mutable {
      Tensor handle = in;
      for (double& g : handle.grad()) g += 1.0;  // spurious extra gradient
    });
    return doubled;
  };
  CHECK_FALSE(grad_check(broken, x, 1e-5, 1e-4).pass);
}

TEST_CASE("every primitive matches finite differences on random shapes") {
  size_t cases = 0;
  for (uint64_t seed = 1; seed <= 21; ++seed) {
    Rng rng(seed * 977);
    const size_t m = 2 + seed % 3, k = 2 + seed % 4, n = 2 + seed % 5;

    Tensor rhs = random_tensor({k, n}, rng);
    auto f_matmul = [&](Tape& t, const Tensor& in) {
      return sum(&t, matmul(&t, in, rhs));
    };
    CHECK(grad_check(f_matmul, random_tensor({m, k}, rng), 1e-5, 1e-4).pass);

    Tensor bt = random_tensor({n, k}, rng);
    auto f_matmul_bt = [&](Tape& t, const Tensor& in) {
      return sum(&t, matmul_bt(&t, in, bt));
    };
    CHECK(grad_check(f_matmul_bt, random_tensor({m, k}, rng), 1e-5, 1e-4).pass);

    Tensor other = random_tensor({m, n}, rng);
    auto f_mul = [&](Tape& t, const Tensor& in) {
      return sum(&t, mul(&t, in, other));
    };
    CHECK(grad_check(f_mul, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    auto f_gelu = [](Tape& t, const Tensor& in) {
      return sum(&t, gelu(&t, in));
    };
    CHECK(grad_check(f_gelu, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    auto f_softmax = [](Tape& t, const Tensor& in) {
      Tensor w = softmax(&t, in, 1);
      return sum(&t, mul(&t, w, w));
    };
    CHECK(grad_check(f_softmax, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    std::vector<uint8_t> allow(m * n, 1);
    allow[0] = 0;
    auto f_masked = [&](Tape& t, const Tensor& in) {
      Tensor w = masked_softmax_rows(&t, in, allow);
      return sum(&t, mul(&t, w, w));
    };
    CHECK(grad_check(f_masked, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    std::vector<size_t> pick{0, m - 1, 0};
    auto f_gather = [&](Tape& t, const Tensor& in) {
      return sum(&t, gather_rows(&t, in, pick));
    };
    CHECK(grad_check(f_gather, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    std::vector<int> ids{0, int(m - 1), 1 % int(m)};
    auto f_embed = [&](Tape& t, const Tensor& in) {
      return sum(&t, embedding(&t, in, ids));
    };
    CHECK(grad_check(f_embed, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    auto f_slice = [&](Tape& t, const Tensor& in) {
      return sum(&t, slice_cols(&t, in, 1, n));
    };
    CHECK(grad_check(f_slice, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);

    Tensor mate = random_tensor({m, 2}, rng);
    auto f_concat = [&](Tape& t, const Tensor& in) {
      std::vector<Tensor> parts{in, mate};
      Tensor cat = concat_cols(&t, parts);
      std::vector<Tensor> stacked{cat, cat};
      return sum(&t, mul(&t, concat_rows(&t, stacked),
                         concat_rows(&t, stacked)));
    };
    CHECK(grad_check(f_concat, random_tensor({m, n}, rng), 1e-5, 1e-4).pass);
    ++cases;
  }
  CHECK(cases >= 20);
}

TEST_CASE("forward and gradients are deterministic across repeat runs") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tensor x = random_tensor({4, 6}, rng, true);
    Tensor w = random_tensor({6, 3}, rng, true);
    Tensor h = gelu(&tape, matmul(&tape, x, w));
    std::vector<int> labs{1, kIgnoreLabel, 0, 2};
    Tensor loss = cross_entropy(&tape, h, labs);
    tape.backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  const auto a = run(123), b = run(123);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
