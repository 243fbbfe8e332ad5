#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "mgcat/kernels.hpp"
#include "mgcat/nn/ops.hpp"
#include "mgcat/nn/optim.hpp"
#include "mgcat/rng.hpp"

using namespace mgcat;
using namespace mgcat::nn;
using namespace mgcat::test;

namespace {

Tensor rand_tensor(Shape s, Rng& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(s), std::move(v), grad);
}

// Projects an arbitrary-shaped output onto fixed random weights so every
// output element contributes a distinct gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = rand_tensor(y.shape(), rng, false);
  return sum(mul(y, w));
}

}  // namespace

TEST_CASE("gemm: serial and omp agree bitwise") {
  Rng rng(3);
  for (auto [m, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {7, 5, 3}, {64, 33, 65}}) {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        std::vector<double> a(m * k), b(k * n), c1(m * n, 0.5), c2(m * n, 0.5);
        for (auto& x : a) x = rng.uniform(-1, 1);
        for (auto& x : b) x = rng.uniform(-1, 1);
        const kernels::GemmShape s{m, n, k, ta, tb};
        kernels::serial::gemm(s, a.data(), b.data(), c1.data(), true);
        kernels::omp::gemm(s, a.data(), b.data(), c2.data(), true);
        CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
      }
  }
}

TEST_CASE("gemm: transposes match the reference product") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b{1, 0, 0, 1, 1, 1};  // 3x2
  std::vector<double> c(4);
  kernels::serial::gemm({2, 2, 3, false, false}, a.data(), b.data(), c.data(), false);
  CHECK(c == std::vector<double>{4, 5, 10, 11});
  const std::vector<double> at{1, 4, 2, 5, 3, 6};  // 3x2, transpose of a
  kernels::serial::gemm({2, 2, 3, true, false}, at.data(), b.data(), c.data(), false);
  CHECK(c == std::vector<double>{4, 5, 10, 11});
}

TEST_CASE("forward ops: hand values") {
  SUBCASE("softmax symmetry") {
    const auto s = softmax_rows(Tensor::from({1, 2}, {0, 0}));
    CHECK(s.data()[0] == 0.5);
    CHECK(s.data()[1] == 0.5);
  }
  SUBCASE("identity matmul") {
    Rng rng(1);
    const auto a = rand_tensor({3, 4}, rng, false);
    const auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto y = matmul(eye, a);
    CHECK(max_abs_diff(y.data(), a.data()) == 0.0);
  }
  SUBCASE("confident cross entropy") {
    const std::vector<int> tgt{0};
    const double v = cross_entropy(Tensor::from({1, 2}, {10, -10}), tgt).item();
    CHECK(v == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-12));
    CHECK(v == doctest::Approx(2.06e-9).epsilon(1e-2));
  }
  SUBCASE("cross entropy ignores negative targets") {
    const std::vector<int> tgt{-1, 1};
    const auto logits = Tensor::from({2, 2}, {5, -3, 0, 0});
    CHECK(cross_entropy(logits, tgt).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("softmax rows and layer norm statistics") {
    Rng rng(2);
    const auto x = rand_tensor({6, 9}, rng, false, -5, 5);
    const auto s = softmax_rows(x);
    for (std::size_t r = 0; r < 6; ++r) {
      double t = 0.0;
      for (std::size_t c = 0; c < 9; ++c) t += s.at(r, c);
      CHECK(std::abs(t - 1.0) < 1e-12);
    }
    const auto ln = layer_norm(x, Tensor::from({1, 9}, std::vector<double>(9, 1.0)), Tensor::zeros({1, 9}));
    for (std::size_t r = 0; r < 6; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < 9; ++c) mean += ln.at(r, c) / 9;
      for (std::size_t c = 0; c < 9; ++c) var += (ln.at(r, c) - mean) * (ln.at(r, c) - mean) / 9;
      CHECK(std::abs(mean) < 1e-10);
      CHECK(std::abs(var - 1.0) < 1e-8);
    }
  }
  SUBCASE("softmax shift invariance") {
    Rng rng(4);
    const auto x = rand_tensor({1, 7}, rng, false);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (auto& v : shifted) v += 123.25;
    CHECK(max_abs_diff(softmax_rows(x).data(), softmax_rows(Tensor::from({1, 7}, shifted)).data()) < 1e-12);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
      FAIL("expected a shape error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
  SUBCASE("bucket bias is a cumulative softplus") {
    const auto delta = Tensor::from({1, 3}, {0.0, std::log(std::exp(2.0) - 1.0), -1e9});
    const std::vector<int> b{0, 1, 2, -1};
    const auto out = bucket_bias(delta, b, 2, 2);
    CHECK(out.data()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(out.data()[1] == doctest::Approx(std::log(2.0) + 2.0).epsilon(1e-15));
    CHECK(out.data()[2] == doctest::Approx(std::log(2.0) + 2.0).epsilon(1e-15));
    CHECK(out.data()[3] == 0.0);
  }
}

TEST_CASE("backward: simple rules and double sweep") {
  SUBCASE("sum gives ones") {
    auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("x*x at 3") {
    auto x = Tensor::from({1, 1}, {3}, true);
    const auto loss = sum(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == 6.0);
    CHECK_THROWS_AS(backward(loss), std::logic_error);
  }
  SUBCASE("no graph under NoGradGuard") {
    auto x = Tensor::from({1, 1}, {3}, true);
    NoGradGuard guard;
    const auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("finite differences: every op below 1e-4") {
  Rng rng(11);
  auto a = rand_tensor({3, 4}, rng);
  auto b = rand_tensor({4, 5}, rng);
  auto c = rand_tensor({3, 4}, rng);
  auto bt = rand_tensor({5, 4}, rng);
  auto bias = rand_tensor({1, 4}, rng);
  auto col = rand_tensor({3, 1}, rng);
  auto g = rand_tensor({1, 4}, rng, true, 0.5, 1.5);
  auto table = rand_tensor({6, 4}, rng);
  auto w = rand_tensor({1, 3}, rng, true, 0.1, 1.0);
  auto delta = rand_tensor({1, 4}, rng);
  const std::vector<int> ids{1, 5, 1, 0};
  const std::vector<int> tgt{2, -1, 3};
  const std::vector<double> times{0.0, 1.5, 3.25};
  const std::vector<int> buckets{0, 3, 1, -1, 2, 2};

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases{
      {"matmul", [&] { return probe(matmul(a, b), 1); }},
      {"matmul_nt", [&] { return probe(matmul_nt(a, bt), 2); }},
      {"transpose", [&] { return probe(transpose(a), 3); }},
      {"add/sub/mul", [&] { return probe(mul(add(a, c), sub(a, c)), 4); }},
      {"add_bias", [&] { return probe(add_bias(a, bias), 5); }},
      {"mul_col", [&] { return probe(mul_col(a, col), 6); }},
      {"scale", [&] { return probe(scale(a, -1.7), 7); }},
      {"tanh", [&] { return probe(tanh(a), 8); }},
      {"sigmoid", [&] { return probe(sigmoid(a), 9); }},
      {"relu", [&] { return probe(relu(add(a, Tensor::from({3, 4}, std::vector<double>(12, 0.0123)))), 10); }},
      {"softmax", [&] { return probe(softmax_rows(a), 11); }},
      {"cross_entropy", [&] { return cross_entropy(matmul(a, b), tgt); }},
      {"layer_norm", [&] { return probe(layer_norm(a, g, bias, 1e-9), 12); }},
      {"embedding", [&] { return probe(embedding(table, ids, 5), 13); }},
      {"gather_rows", [&] { return probe(gather_rows(a, std::vector<int>{2, 0, 2}), 14); }},
      {"concat", [&] { return probe(concat_rows({concat_cols({a, c}), concat_cols({c, a})}), 15); }},
      {"slice", [&] { return probe(slice_rows(slice_cols(matmul(a, b), 1, 4), 1, 3), 16); }},
      {"reshape", [&] { return probe(reshape(a, {2, 6}), 17); }},
      {"mean_rows/mean", [&] { return add(probe(mean_rows(a), 18), mean(mul(a, c))); }},
      {"temporal_encoding", [&] { return probe(temporal_encoding(w, times), 19); }},
      {"bucket_bias", [&] { return probe(bucket_bias(delta, buckets, 2, 3), 20); }},
      {"graph_attention",
       [&] {
         return probe(graph_attention(a, slice_rows(reshape(b, {20, 1}), 0, 4), slice_rows(reshape(b, {20, 1}), 4, 8),
                                      {{0, 1, 2}, {1}, {2, 0}}, 2, 0.2),
                      21);
       }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    CHECK(finite_diff_check(f, {a, b, c, bt, bias, col, g, table, w, delta}) < 1e-4);
  }
}

TEST_CASE("finite difference checker: calibration") {
  auto x = Tensor::from({1, 3}, {0.3, -1.2, 2.0}, true);
  CHECK(finite_diff_check([&] { return sum(mul(x, x)); }, {x}) < 1e-9);
  CHECK(finite_diff_check([&] { return sum(tanh(scale(tanh(x), 1.3))); }, {x}) < 1e-6);

  // A node whose backward pushes 3x instead of 2x.
  auto broken = [&] {
    auto node = std::make_shared<Node>();
    node->shape = x.shape();
    node->leaf = false;
    node->requires_grad = true;
    node->parents.push_back(x.ptr());
    for (double v : x.data()) node->value.push_back(v * v);
    node->backward = [xp = x.ptr()](Node& self) {
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += 3.0 * xp->value[i] * self.grad[i];
    };
    return sum(Tensor(node));
  };
  CHECK(finite_diff_check(broken, {x}) > 1e-2);

  ParamStore store;
  store.add("x", x);
  CHECK(finite_diff_report(broken, store, {"x"}, kStepLadder).at("x") > 1e-2);
  CHECK(finite_diff_report([&] { return sum(mul(x, x)); }, store, {"x"}, kStepLadder).at("x") < 1e-9);
}

TEST_CASE("adam") {
  ParamStore store;
  store.add("x", Tensor::from({1, 1}, {0.5}, true));
  ParamGroup pg(store, {"x"});
  AdamOptions opt;
  CHECK(opt.lr == 1e-4);
  CHECK(opt.beta1 == 0.9);
  CHECK(opt.beta2 == 0.999);

  SUBCASE("zero grads leave parameters unchanged") {
    store.at("x").grad_mut()[0] = 0.0;
    pg.adam_step(opt);
    CHECK(store.at("x").data()[0] == 0.5);
  }
  SUBCASE("unit gradient first step moves by lr") {
    backward(sum(store.at("x")));
    pg.adam_step(opt);
    CHECK(store.at("x").data()[0] == doctest::Approx(0.5 - opt.lr).epsilon(1e-12));
    CHECK(store.at("x").grad()[0] == 0.0);
    CHECK(pg.step_count() == 1);
  }
  SUBCASE("NaN gradient aborts naming the parameter") {
    store.at("x").grad_mut()[0] = std::nan("");
    try {
      pg.adam_step(opt);
      FAIL("expected an error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("x") != std::string::npos);
    }
    CHECK(store.at("x").data()[0] == 0.5);
  }
}

TEST_CASE("checkpoint") {
  const auto dir = scratch_dir("ckpt");
  Rng rng(5);
  ParamStore store;
  store.add_uniform("a/w", {3, 4}, 4, rng);
  store.add_constant("b", {1, 2}, -4.0);
  store.add("c", Tensor::from({1, 2}, {std::nextafter(1.0, 2.0), -0.0}, true));
  save_checkpoint(store, dir / "m.ckpt");

  SUBCASE("bit-exact round trip") {
    const auto back = load_checkpoint(dir / "m.ckpt");
    CHECK(back.names() == store.names());
    for (const auto& n : store.names()) {
      CHECK(back.at(n).shape() == store.at(n).shape());
      CHECK(std::memcmp(back.at(n).data().data(), store.at(n).data().data(), store.at(n).size() * sizeof(double)) ==
            0);
    }
    CHECK(back.checksum(back.names()) == store.checksum(store.names()));
  }
  SUBCASE("header layout") {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::memcmp(magic, "MGCATCKP", 8) == 0);
    unsigned char v[4];
    in.read(reinterpret_cast<char*>(v), 4);
    CHECK(v[0] == 1);
    CHECK(v[1] == 0);
  }
  SUBCASE("bad magic and truncation are rejected") {
    {
      std::ofstream out(dir / "bad.ckpt", std::ios::binary);
      out << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ValidationError);
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    {
      std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), ValidationError);
  }
}

TEST_CASE("param store init is seeded") {
  Rng r1(9), r2(9);
  ParamStore a, b;
  a.add_uniform("w", {4, 4}, 4, r1);
  b.add_uniform("w", {4, 4}, 4, r2);
  CHECK(a.checksum({"w"}) == b.checksum({"w"}));
  for (double v : a.at("w").data()) {
    CHECK(v >= -0.5);
    CHECK(v <= 0.5);
  }
}
