#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>

#include "flame/error.hpp"
#include "flame/estimator_store.hpp"
#include "flame/governor.hpp"
#include "flame/modelest.hpp"
#include "oracles/min_power.hpp"
#include "synthetic.hpp"

using namespace flame;
using namespace flame::governor;

namespace {

const FrequencyGrid kGrid = FrequencyGrid::uniform(0.1, 2.2, 29, 0.3, 1.3, 11);
const devicesim::PowerModel kPower{5.0, 0.4, 6.0};

// Strictly antitone in both frequencies.
double roofline(Frequency c, Frequency g) { return 3.0 / c.ghz() + 6.0 / g.ghz() + 0.5; }

}  // namespace

TEST_CASE("deadline validation") {
  CHECK_THROWS_AS(Deadline{0.0}, ValidationError);
  CHECK_THROWS_AS(Deadline{-3.0}, ValidationError);
  CHECK_THROWS_AS(Deadline{INFINITY}, ValidationError);
  CHECK(Deadline(12.5).ms() == 12.5);
}

TEST_CASE("greedy loosest deadline picks the bottom pair") {
  const double slow = roofline(kGrid.cpu_min(), kGrid.gpu_min());
  const auto d = greedy_search(roofline, kGrid, Deadline(slow + 1.0), kPower);
  CHECK(d.feasible);
  CHECK(d.f_c == kGrid.cpu_min());
  CHECK(d.f_g == kGrid.gpu_min());
  CHECK(d.estimator_calls == 2);
}

TEST_CASE("greedy infeasible deadline returns the top pair flagged") {
  const double fast = roofline(kGrid.cpu_max(), kGrid.gpu_max());
  const auto d = greedy_search(roofline, kGrid, Deadline(fast * 0.9), kPower);
  CHECK_FALSE(d.feasible);
  CHECK(d.f_c == kGrid.cpu_max());
  CHECK(d.f_g == kGrid.gpu_max());
  CHECK(d.estimator_calls == kGrid.gpu_levels().size());
}

TEST_CASE("greedy decision invariants over a deadline sweep") {
  const double lo = roofline(kGrid.cpu_max(), kGrid.gpu_max());
  const double hi = roofline(kGrid.cpu_min(), kGrid.gpu_min());
  std::optional<GovernorDecision> previous;
  for (int i = 0; i <= 400; ++i) {
    const double t_d = lo * 0.8 + (hi * 1.1 - lo * 0.8) * i / 400.0;
    const auto d = greedy_search(roofline, kGrid, Deadline(t_d), kPower);
    CHECK(d.estimator_calls <= kGrid.cpu_levels().size() + kGrid.gpu_levels().size());
    if (d.feasible) CHECK(d.predicted_latency_ms <= t_d);
    bool pinned_feasible = false;
    for (const auto& g : kGrid.gpu_levels()) pinned_feasible |= roofline(kGrid.cpu_max(), g) <= t_d;
    CHECK(d.feasible == pinned_feasible);
    if (d.feasible && previous && previous->feasible) {
      // A looser deadline never raises the GPU level, nor the CPU level at an
      // unchanged GPU level.
      CHECK(d.f_g <= previous->f_g);
      if (d.f_g == previous->f_g) CHECK(d.f_c <= previous->f_c);
    }
    previous = d;
  }
}

TEST_CASE("greedy power is not monotone in the deadline") {
  // Dropping a GPU level can force a much faster CPU.
  const double lo = roofline(kGrid.cpu_max(), kGrid.gpu_max());
  const double hi = roofline(kGrid.cpu_min(), kGrid.gpu_min());
  bool found = false;
  double previous = 0.0, previous_oracle = INFINITY;
  for (int i = 0; i <= 2000; ++i) {
    const Deadline t_d(lo + (hi - lo) * i / 2000.0);
    const auto g = greedy_search(roofline, kGrid, t_d, kPower);
    const auto o = oracle_search(roofline, kGrid, kPower, t_d);
    if (i > 0 && g.predicted_power_w > previous + 1e-9) found = true;
    CHECK(o.predicted_power_w <= previous_oracle + 1e-12);
    previous = g.predicted_power_w;
    previous_oracle = o.predicted_power_w;
  }
  CHECK(found);
}

TEST_CASE("greedy takes the first feasible level even when latency is not monotone") {
  const FrequencyGrid grid({Frequency(1.0), Frequency(2.0), Frequency(3.0)},
                           {Frequency(1.0), Frequency(2.0), Frequency(3.0)});
  auto bumpy = [](Frequency c, Frequency g) {
    if (g == Frequency(1.0)) return 50.0;
    if (c == Frequency(1.0)) return 5.0;
    if (c == Frequency(2.0)) return 50.0;
    return 8.0;
  };
  const auto d = greedy_search(bumpy, grid, Deadline(10.0), kPower);
  CHECK(d.f_g == Frequency(2.0));
  CHECK(d.f_c == Frequency(1.0));
}

TEST_CASE("oracle search") {
  SUBCASE("one by one grid") {
    const FrequencyGrid one({Frequency(1.0)}, {Frequency(1.0)});
    const auto d = oracle_search(roofline, one, kPower, Deadline(100.0));
    CHECK(d.feasible);
    CHECK(d.f_c == Frequency(1.0));
    CHECK(d.estimator_calls == 1);
  }
  SUBCASE("calls cover the grid") {
    const auto d = oracle_search(roofline, kGrid, kPower, Deadline(20.0));
    CHECK(d.estimator_calls == 319);
  }
  SUBCASE("agrees with the brute-force oracle and sits on the frontier") {
    const auto& cs = kGrid.cpu_levels();
    const auto& gs = kGrid.gpu_levels();
    for (double t_d = 5.0; t_d < 80.0; t_d += 0.37) {
      const auto d = oracle_search(roofline, kGrid, kPower, Deadline(t_d));
      const auto brute = oracle::min_power_pair(roofline, kGrid, kPower, t_d);
      REQUIRE(d.feasible == brute.has_value());
      if (!brute) continue;
      CHECK(d.f_c.ghz() == brute->f_c);
      CHECK(d.f_g.ghz() == brute->f_g);
      const auto i = *kGrid.cpu_index(d.f_c);
      const auto j = *kGrid.gpu_index(d.f_g);
      if (i > 0) CHECK(roofline(cs[i - 1], gs[j]) > t_d);
      if (j > 0) CHECK(roofline(cs[i], gs[j - 1]) > t_d);
    }
  }
  SUBCASE("nothing feasible") {
    const auto d = oracle_search(roofline, kGrid, kPower, Deadline(1.0));
    CHECK_FALSE(d.feasible);
    CHECK(d.f_c == kGrid.cpu_max());
  }
}

TEST_CASE("greedy on simulator-fitted estimators") {
  const auto device = devicesim::make_device(31);
  const auto spec = testing::standard_dnn();
  const auto ds = testing::profile(device, testing::distinct_layers(spec), testing::stride_plan(4), 31);
  const auto store = layerfit::fit_estimator_store(ds);
  modelest::ModelEstimator est(store);
  LatencyEstimator f = [&](Frequency c, Frequency g) { return est.total_ms(spec, c, g); };
  const double lo = f(device.grid.cpu_max(), device.grid.gpu_max());
  const double hi = f(device.grid.cpu_min(), device.grid.gpu_min());
  double previous = INFINITY;
  for (int i = 0; i <= 60; ++i) {
    const double t_d = lo + (hi - lo) * i / 60.0;
    const auto d = greedy_search(f, device.grid, Deadline(t_d), device.power);
    CHECK(d.feasible);
    const auto o = oracle_search(f, device.grid, device.power, Deadline(t_d));
    CHECK(o.predicted_power_w <= previous + 1e-12);
    CHECK(o.predicted_power_w <= d.predicted_power_w + 1e-12);
    previous = o.predicted_power_w;
    const auto m = max_frequency(f, device.grid, Deadline(t_d), device.power);
    CHECK(m.predicted_power_w >= d.predicted_power_w);
  }
}

TEST_CASE("metrics") {
  const std::vector<double> y{10, 20}, yhat{11, 18};
  CHECK(mape(y, yhat) == doctest::Approx(10.0));
  CHECK(mape(y, y) == 0.0);
  CHECK(mape(std::vector<double>{8}, std::vector<double>{10}) == doctest::Approx(25.0));
  CHECK_THROWS_AS(mape(std::vector<double>{0, 1}, std::vector<double>{1, 1}), ValidationError);
  CHECK_THROWS_AS(mape(std::vector<double>{1}, std::vector<double>{1, 1}), ValidationError);
  CHECK(qos(45, 50) == doctest::Approx(90.0));
  CHECK(qos(60, 50) == 100.0);
  CHECK(ppw(100, 20) == 5.0);
  CHECK_THROWS_AS(qos(1, 0), ValidationError);
  CHECK_THROWS_AS(ppw(100, 0), ValidationError);
}

TEST_CASE("deadline schedule") {
  const auto s = parse_deadline_schedule(
      R"({"deadlines":[{"step":0,"deadline_ms":20},{"step":250,"deadline_ms":12}]})");
  CHECK(s.at(0) == 20.0);
  CHECK(s.at(249) == 20.0);
  CHECK(s.at(250) == 12.0);
  CHECK(s.at(10000) == 12.0);
  CHECK_THROWS_AS(parse_deadline_schedule(R"({"deadlines":[{"step":5,"deadline_ms":20}]})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_deadline_schedule(R"({"deadlines":[{"step":0,"deadline_ms":-2}]})"),
                  ValidationError);
}

TEST_CASE("disturbance parsing") {
  auto d = parse_disturbance("0.3@step250");
  CHECK(d.load == 0.3);
  CHECK(d.start_step == 250);
  CHECK_FALSE(d.end_step.has_value());
  CHECK(d.active(250));
  CHECK_FALSE(d.active(249));
  d = parse_disturbance("0.5@step10-20");
  CHECK(d.active(19));
  CHECK_FALSE(d.active(20));
  CHECK_THROWS_AS(parse_disturbance("0.3@250"), ValidationError);
  CHECK_THROWS_AS(parse_disturbance("x@step2"), ValidationError);
}

TEST_CASE("policy names") {
  CHECK(parse_policy("greedy") == Policy::kGreedy);
  CHECK(parse_policy("max") == Policy::kMaxFrequency);
  CHECK(to_string(Policy::kOracle) == "oracle");
  CHECK_THROWS_AS(parse_policy("zTT"), ValidationError);
}

TEST_CASE("govern loop with a static deadline") {
  const auto device = devicesim::make_device(32);
  const auto spec = testing::standard_dnn();
  const auto ds = testing::profile(device, testing::distinct_layers(spec), testing::stride_plan(4), 32);
  const auto store = layerfit::fit_estimator_store(ds);
  devicesim::DeviceSimulator sim(device, 32);
  Scenario sc;
  sc.spec = spec;
  sc.deadlines = DeadlineSchedule::constant(20.0);
  sc.steps = 200;
  const auto trace = govern_loop(store, sim, sc);
  REQUIRE(trace.complete);
  REQUIRE(trace.rows.size() == 200);
  const auto report = evaluate_trace(trace.rows, sc.deadlines);
  CHECK(report.qos == 100.0);
  CHECK(report.qos >= 0.0);
  for (std::size_t i = 50; i < trace.rows.size(); ++i) {
    CHECK(trace.rows[i].f_c == trace.rows[49].f_c);
    CHECK(trace.rows[i].f_g == trace.rows[49].f_g);
  }

  SUBCASE("trace CSV round trip") {
    const auto csv = trace_csv(trace);
    CHECK(csv.rfind("step,f_c,f_g,pred_ms,meas_ms,power_w,qos_flag,delta_t\n", 0) == 0);
    const auto rows = parse_trace_csv(csv);
    REQUIRE(rows.size() == trace.rows.size());
    CHECK(rows[7].meas_ms == trace.rows[7].meas_ms);
    CHECK(rows[7].f_g == trace.rows[7].f_g);
    const auto again = evaluate_trace(rows, sc.deadlines);
    CHECK(again.qos == report.qos);
    CHECK(again.ppw == report.ppw);
  }
  SUBCASE("malformed trace CSV points at the bad row") {
    auto csv = trace_csv(trace);
    const auto second_row = csv.find('\n', csv.find('\n') + 1) + 1;
    csv.insert(second_row, "x");
    try {
      parse_trace_csv(csv);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == second_row);
    }
  }
}

TEST_CASE("govern loop stops at a simulator failure") {
  const auto device = devicesim::make_device(33);
  const auto spec = testing::standard_dnn();
  const auto ds = testing::profile(device, testing::distinct_layers(spec), testing::stride_plan(4), 33);
  const auto store = layerfit::fit_estimator_store(ds);
  devicesim::DeviceSimulator sim(device, 33);
  Scenario sc;
  sc.spec = spec;
  sc.deadlines = DeadlineSchedule::constant(20.0);
  sc.steps = 50;
  sc.disturbances.push_back({10, std::nullopt, -2.0});
  const auto trace = govern_loop(store, sim, sc);
  CHECK_FALSE(trace.complete);
  CHECK(trace.rows.size() == 10);
  CHECK_FALSE(trace.failure.empty());
}
