// Loop-filter realizations: pinned coefficient values, transfer-function
// spot checks, and parameter validation.

#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include <pllsim/loop_filter.hpp>

using namespace pllsim;

TEST_CASE("lead-lag coefficients match the realization formulas") {
  const LoopFilter f = make_lead_lag(2.0, 1.0);
  CHECK(f.a == Catch::Approx(-0.5));
  CHECK(f.b == Catch::Approx(0.5));
  CHECK(f.c == Catch::Approx(0.5));
  CHECK(f.h == Catch::Approx(0.5));

  const LoopFilter lag = make_lead_lag(1.0, 0.0);  // pure first-order lag
  CHECK(lag.a == Catch::Approx(-1.0));
  CHECK(lag.b == Catch::Approx(1.0));
  CHECK(lag.c == Catch::Approx(1.0));
  CHECK(lag.h == Catch::Approx(0.0));
}

TEST_CASE("active-pi coefficients match the realization formulas") {
  const LoopFilter f = make_active_pi(1.0, 2.0);
  CHECK(f.a == 0.0);
  CHECK(f.b == Catch::Approx(1.0));
  CHECK(f.c == Catch::Approx(1.0));
  CHECK(f.h == Catch::Approx(2.0));

  const LoopFilter g = make_active_pi(0.0633, 0.0225);
  CHECK(g.b == Catch::Approx(15.798).epsilon(1e-3));
  CHECK(g.h == Catch::Approx(0.35545).epsilon(1e-3));
}

TEST_CASE("invalid time constants are rejected with the field named") {
  CHECK_THROWS_AS(make_lead_lag(1.0, 1.0), ParameterError);
  CHECK_THROWS_AS(make_lead_lag(1.0, 2.0), ParameterError);
  CHECK_THROWS_AS(make_lead_lag(0.0, 0.0), ParameterError);
  CHECK_THROWS_AS(make_active_pi(-1.0, 1.0), ParameterError);
  CHECK_THROWS_AS(make_active_pi(1.0, 0.0), ParameterError);

  try {
    (void)make_lead_lag(1.0, 1.5);
    FAIL("expected ParameterError");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("tau2") != std::string::npos);
  }
}

TEST_CASE("transfer function evaluates from the realization") {
  const LoopFilter ll = make_lead_lag(2.0, 1.0);
  CHECK(transfer_at(ll, 0.0).real() == Catch::Approx(1.0));
  CHECK(transfer_at(ll, 0.0).imag() == Catch::Approx(0.0).margin(1e-15));
  CHECK(transfer_at(ll, 1.0).real() == Catch::Approx(2.0 / 3.0));

  const LoopFilter pi = make_active_pi(1.0, 1.0);
  CHECK(transfer_at(pi, 1.0).real() == Catch::Approx(2.0));

  // Frequency response along the imaginary axis agrees with the closed form
  // (1 + s·tau2)/(1 + s·tau1).
  const std::complex<double> s(0.0, 3.0);
  const std::complex<double> expect = (1.0 + s * 1.0) / (1.0 + s * 2.0);
  const std::complex<double> got = transfer_at(ll, s);
  CHECK(std::abs(got - expect) < 1e-12);
}

TEST_CASE("transfer function refuses its pole") {
  CHECK_THROWS_AS(transfer_at(make_active_pi(1.0, 1.0), 0.0), PoleError);
  CHECK_THROWS_AS(transfer_at(make_lead_lag(2.0, 1.0), -0.5), PoleError);
}

TEST_CASE("filter output is the read-out map") {
  CHECK(filter_output(make_lead_lag(2.0, 1.0), 1.0, 0.0) == Catch::Approx(0.5));
  CHECK(filter_output(make_active_pi(1.0, 2.0), 3.0, 0.0) == Catch::Approx(3.0));
  CHECK(filter_output(make_active_pi(1.0, 2.0), 0.0, 1.0) == Catch::Approx(2.0));
}
