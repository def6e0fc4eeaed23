#include <cmath>
#include <cstdlib>
#include <string_view>
#include <vector>

#include "authaudit/kernels.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;

namespace {

struct Data {
  std::vector<double> a, b;
  std::vector<float> fa, fb;
};

Data make_data(std::size_t n, std::uint64_t seed) {
  Pcg32 rng(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    d.a.push_back(rng.normal(0.3, 2.0));
    d.b.push_back(rng.normal(-1.0, 0.5));
    d.fa.push_back(static_cast<float>(d.a.back()));
    d.fb.push_back(static_cast<float>(d.b.back()));
  }
  return d;
}

// Plain loops in long double, the reference both tables are held to.
long double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

double abs_scale(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

void check_table(const kernels::KernelTable& t) {
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 31u, 64u, 67u, 1000u, 4099u}) {
    CAPTURE(n);
    const Data d = make_data(n, n + 1);
    const double scale = abs_scale(d.a, d.b);
    CHECK(std::abs(t.dot_f64(d.a.data(), d.b.data(), n) - static_cast<double>(ref_dot(d.a, d.b))) <= 1e-13 * scale);

    long double fref = 0;
    double fscale = 1e-30;
    for (std::size_t i = 0; i < n; ++i) {
      fref += static_cast<long double>(d.fa[i]) * d.fb[i];
      fscale += std::abs(static_cast<double>(d.fa[i]) * d.fb[i]);
    }
    CHECK(std::abs(t.dot_f32(d.fa.data(), d.fb.data(), n) - static_cast<double>(fref)) <= 1e-5 * fscale);

    long double sum = 0;
    double sum_scale = 1e-300;
    for (double v : d.a) {
      sum += v;
      sum_scale += std::abs(v);
    }
    CHECK(std::abs(t.sum_f64(d.a.data(), n) - static_cast<double>(sum)) <= 1e-13 * sum_scale);

    std::vector<double> y = d.b;
    t.axpy_f64(-0.75, d.a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(d.b[i] - 0.75 * d.a[i]).epsilon(1e-14));

    const double mx = 0.25, my = -0.5;
    long double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += (d.a[i] - mx) * (d.a[i] - mx);
      syy += (d.b[i] - my) * (d.b[i] - my);
      sxy += (d.a[i] - mx) * (d.b[i] - my);
    }
    const auto m = t.centered_moments_f64(d.a.data(), d.b.data(), n, mx, my);
    CHECK(m.sxx == doctest::Approx(static_cast<double>(sxx)).epsilon(1e-12));
    CHECK(m.syy == doctest::Approx(static_cast<double>(syy)).epsilon(1e-12));
    CHECK(std::abs(m.sxy - static_cast<double>(sxy)) <= 1e-12 * (1.0 + std::sqrt(m.sxx * m.syy)));
  }
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar table matches extended-precision reference") { check_table(kernels::scalar()); }

  TEST_CASE("avx2 table matches reference and scalar table") {
    const kernels::KernelTable* fast = kernels::avx2();
    if (!fast) {
      MESSAGE("AVX2 unavailable on this host; skipped");
      return;
    }
    check_table(*fast);
    const auto& s = kernels::scalar();
    for (std::size_t n : {5u, 33u, 257u}) {
      const Data d = make_data(n, 99 + n);
      CHECK(fast->dot_f64(d.a.data(), d.b.data(), n) ==
            doctest::Approx(s.dot_f64(d.a.data(), d.b.data(), n)).epsilon(1e-12));
      CHECK(fast->sum_f64(d.a.data(), n) == doctest::Approx(s.sum_f64(d.a.data(), n)).epsilon(1e-12));
    }
  }

  TEST_CASE("runtime dispatch honours AUTHAUDIT_KERNELS") {
    const char* forced = std::getenv("AUTHAUDIT_KERNELS");
    const auto& active = kernels::active();
    if (forced && std::string_view(forced) == "scalar") {
      CHECK(&active == &kernels::scalar());
    } else if (kernels::avx2()) {
      CHECK(&active == kernels::avx2());
    } else {
      CHECK(&active == &kernels::scalar());
    }
    CHECK(std::string_view(active.name).size() > 0);
  }
}
