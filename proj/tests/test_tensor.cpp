#include <doctest.h>

#include <cstdlib>
#include <string>

#include "advobj/io.hpp"
#include "advobj/rng.hpp"
#include "advobj/tensor.hpp"
#include "support/testmodels.hpp"

using namespace advobj;
namespace tt = advobj::testing;

TEST_CASE("shape bookkeeping") {
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK_THROWS_AS(shape_numel({2, 0}), std::invalid_argument);
  CHECK(shape_str({2, 3}) == "(2,3)");

  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
  Tensor r = t.reshaped({3, 2});
  CHECK(r.shape == Shape{3, 2});
  CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("elementwise ops") {
  Tensor a({3}, {1.0, -2.0, 3.0});
  Tensor b({3}, {0.5, 4.0, -1.0});

  CHECK(add(a, b).data == std::vector<double>{1.5, 2.0, 2.0});
  CHECK(sub(a, b).data == std::vector<double>{0.5, -6.0, 4.0});
  CHECK(scale(a, 2.0).data == std::vector<double>{2.0, -4.0, 6.0});
  CHECK(hadamard(a, b).data == std::vector<double>{0.5, -8.0, -3.0});
  CHECK(dot(a, b) == doctest::Approx(-10.5));
  CHECK(sum(a) == doctest::Approx(2.0));
  CHECK(norm2(a) == doctest::Approx(std::sqrt(14.0)));

  Tensor c = a;
  axpy(c, 2.0, b);
  CHECK(c.data == std::vector<double>{2.0, 6.0, 1.0});

  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), std::invalid_argument);
  CHECK(max_abs_diff(a, b) == doctest::Approx(6.0));
  CHECK(bit_equal(a, a));
  CHECK_FALSE(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, Tensor::zeros({2})));
}

TEST_CASE("finiteness guard") {
  Tensor a({2}, {1.0, std::nan("")});
  CHECK_FALSE(a.all_finite());
  CHECK_THROWS_AS(a.require_finite("probe"), std::runtime_error);
  Tensor b({2}, {1.0, 2.0});
  CHECK_NOTHROW(b.require_finite("probe"));
}

TEST_CASE("seed derivation separates labels and indices") {
  std::uint64_t a = derive_seed(7, "alpha");
  CHECK(a == derive_seed(7, "alpha"));
  CHECK(a != derive_seed(7, "beta"));
  CHECK(a != derive_seed(8, "alpha"));
  CHECK(derive_seed(7, "alpha", 1) != derive_seed(7, "alpha", 2));
}

TEST_CASE("rng streams are reproducible and roughly standard") {
  Rng r1(42), r2(42);
  for (int i = 0; i < 100; ++i) CHECK(r1.normal() == r2.normal());

  Rng r(123);
  double m = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    m += x;
    m2 += x * x;
  }
  m /= n;
  m2 /= n;
  CHECK(std::abs(m) < 0.03);
  CHECK(std::abs(m2 - 1.0) < 0.05);

  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    int k = u.uniform_int(3, 7);
    CHECK(k >= 3);
    CHECK(k <= 7);
  }
}

TEST_CASE("tensor file round-trip is bit exact") {
  tt::ScratchDir dir("tensorio");
  Rng rng(5);
  Tensor t = rng.normal_tensor({3, 4});
  t.data[0] = 1e-300;
  t.data[1] = -0.0;
  write_tensor(dir.str("t.tensor"), t);
  Tensor back = read_tensor(dir.str("t.tensor"));
  CHECK(back.shape == t.shape);
  CHECK(bit_equal(back, t));
}

TEST_CASE("fmt_g17 round-trips doubles through text") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    double v = rng.normal() * std::pow(10.0, rng.uniform_int(-8, 8));
    std::string s = fmt_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(std::strtod(fmt_g17(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
}

TEST_CASE("image and mask files") {
  tt::ScratchDir dir("imageio");
  Tensor img({1, 2, 3}, {0.0, 0.25, 0.5, 0.75, 1.0, 2.0});  // 2.0 clamps to 1
  write_image(dir.str("a.pgm"), img);
  Tensor back = read_image(dir.str("a.pgm"));
  CHECK(back.shape == Shape{1, 2, 3});
  // 8-bit quantization error stays below one level.
  Tensor clamped = img;
  clamped.data[5] = 1.0;
  CHECK(max_abs_diff(back, clamped) <= 0.5 / 255.0 + 1e-12);

  Tensor m({2, 2}, {1.0, 0.0, 0.0, 1.0});
  write_mask_tensor(dir.str("m.pgm"), m);
  CHECK(bit_equal(read_mask_tensor(dir.str("m.pgm")), m));

  Tensor depth({2, 2}, {3.0, 5.0, 4.0, 7.0});
  auto [lo, hi] = write_image_normalized(dir.str("d.pgm"), depth);
  CHECK(lo == 3.0);
  CHECK(hi == 7.0);
  Tensor d = read_image(dir.str("d.pgm"));
  CHECK(d.data[0] == 0.0);
  CHECK(d.data[3] == 1.0);
}

TEST_CASE("csv and text writers produce exactly the requested bytes") {
  tt::ScratchDir dir("csvio");
  write_csv(dir.str("r.csv"), {"a", "b"}, {{"1", "2"}, {fmt_g17(0.5), "x"}});
  CHECK(tt::slurp(dir.str("r.csv")) == "a,b\n1,2\n0.5,x\n");
  write_text(dir.str("t.txt"), "line\n");
  CHECK(read_text(dir.str("t.txt")) == "line\n");
}
