#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "flame/error.hpp"
#include "flame/io.hpp"
#include "flame/profiler.hpp"
#include "synthetic.hpp"

using namespace flame;
using namespace flame::profiler;

namespace {

const FrequencyGrid kOrin = FrequencyGrid::uniform(0.1, 2.2, 29, 0.3, 1.3, 11);

class FailingSource final : public ProfileSource {
 public:
  FailingSource(devicesim::DeviceSimulator& sim, int budget) : inner_(sim), budget_(budget) {}
  std::string device_id() const override { return inner_.device_id(); }
  ProfileSample measure(const LayerConfig& c, Frequency f_c, Frequency f_g) override {
    if (budget_-- <= 0) throw IoError("source went away");
    return inner_.measure(c, f_c, f_g);
  }

 private:
  SimulatorSource inner_;
  int budget_;
};

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "flame_profiler_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("plan_points sizes") {
  CHECK(plan_points(kOrin, testing::stride_plan(4)).size() == 32);
  CHECK(plan_points(kOrin, testing::stride_plan(1)).size() == 319);
  const FrequencyGrid one({Frequency(1.0)}, {Frequency(0.5)});
  CHECK(plan_points(one, testing::stride_plan(3)).size() == 1);
  CHECK(strided_indices(29, 4) == std::vector<std::size_t>{0, 4, 8, 12, 16, 20, 24, 28});
  CHECK(strided_indices(11, 4) == std::vector<std::size_t>{0, 4, 8, 10});
}

TEST_CASE("plan_points size bound holds for every stride") {
  for (int sc = 1; sc <= 12; ++sc) {
    for (int sg = 1; sg <= 12; ++sg) {
      SamplingPlan plan;
      plan.cpu_stride = sc;
      plan.gpu_stride = sg;
      const auto pts = plan_points(kOrin, plan);
      const auto bound = (std::ceil(29.0 / sc) + 1) * (std::ceil(11.0 / sg) + 1);
      CHECK(static_cast<double>(pts.size()) <= bound);
      CHECK(pts.front().f_c == kOrin.cpu_min());
      CHECK(pts.back().f_c == kOrin.cpu_max());
      CHECK(pts.back().f_g == kOrin.gpu_max());
    }
  }
}

TEST_CASE("context points include both ends") {
  SamplingPlan plan;
  const auto ctx = context_points(plan);
  CHECK(ctx.size() == 13);
  CHECK(ctx.front() == 1);
  CHECK(ctx[11] == 991);
  CHECK(ctx.back() == 1024);
  plan.context_max = 91;
  CHECK(context_points(plan) == std::vector<std::int64_t>{1, 91});
}

TEST_CASE("plan validation") {
  SamplingPlan plan;
  plan.cpu_stride = 0;
  CHECK_THROWS_AS(plan.validate(), ValidationError);
  plan = {};
  plan.iterations = 0;
  CHECK_THROWS_AS(plan.validate(), ValidationError);
}

TEST_CASE("campaign without jitter records the exact law") {
  const auto device = testing::noiseless(devicesim::make_device(8));
  const auto cfg = make_linear(1024, 2048);
  const auto ds = testing::profile(device, {cfg}, testing::stride_plan(4), 1);
  CHECK(ds.complete);
  REQUIRE(ds.samples.size() == 32);
  const auto law = devicesim::generate_ground_truth(cfg, device);
  for (const auto& s : ds.samples) {
    CHECK(s.cpu_ms == law.cpu_ms(s.f_c));
    CHECK(s.gpu_ms == law.gpu_ms(s.f_g));
    CHECK(s.delta_ms == law.delta_ms(s.f_c, s.f_g));
    REQUIRE(s.features.has_value());
  }
}

TEST_CASE("transformer configs are swept over contexts") {
  const auto device = devicesim::make_device(8);
  const auto ds = testing::profile(device, {make_transformer(256, 4, 1)}, testing::stride_plan(4), 1);
  CHECK(ds.samples.size() == 13 * 32);
  CHECK(ds.configs(LayerType::kTransformer).size() == 13);
}

TEST_CASE("400 iterations average the jitter out") {
  const auto device = devicesim::make_device(8);
  const auto cfg = make_convolution(28, 28, 64, 64, 3, 1);
  auto plan = testing::stride_plan(28);
  plan.iterations = 400;
  const auto ds = testing::profile(device, {cfg}, plan, 5);
  const auto law = devicesim::generate_ground_truth(cfg, device);
  for (const auto& s : ds.samples) {
    CHECK(std::abs(s.cpu_ms - law.cpu_ms(s.f_c)) / law.cpu_ms(s.f_c) < 0.01);
  }
}

TEST_CASE("variance of averaged samples shrinks with iterations") {
  const auto device = devicesim::make_device(8);
  const auto cfg = make_linear(512, 512);
  double previous = INFINITY;
  for (int iters : {1, 4, 16}) {
    auto plan = testing::stride_plan(100);
    plan.iterations = iters;
    double sum = 0.0, sq = 0.0;
    const int runs = 200;
    for (int seed = 0; seed < runs; ++seed) {
      const double v = testing::profile(device, {cfg}, plan, seed).samples.front().cpu_ms;
      sum += v;
      sq += v * v;
    }
    const double var = sq / runs - (sum / runs) * (sum / runs);
    CHECK(var < previous);
    previous = var;
  }
}

TEST_CASE("a failing source leaves a partial dataset") {
  devicesim::DeviceSimulator sim(devicesim::make_device(2), 1);
  FailingSource source(sim, 10);
  const auto ds = run_campaign(source, {make_linear(64, 64)}, kOrin, testing::stride_plan(4));
  CHECK_FALSE(ds.complete);
  CHECK(ds.samples.size() == 10);
  CHECK(ds.failure.find("source went away") != std::string::npos);
}

TEST_CASE("trace source replays recorded samples") {
  const auto device = devicesim::make_device(2);
  const auto ds = testing::profile(device, {make_linear(64, 64)}, testing::stride_plan(4), 3);
  TraceSource replay(ds);
  const auto again = run_campaign(replay, {make_linear(64, 64)}, kOrin, testing::stride_plan(4));
  CHECK(again.samples == ds.samples);
  const auto more = run_campaign(replay, {make_linear(64, 64)}, kOrin, testing::stride_plan(2));
  CHECK_FALSE(more.complete);
}

TEST_CASE("dataset save and load round trip") {
  const auto device = devicesim::make_device(2);
  const auto ds = testing::profile(
      device, {make_linear(64, 64), make_convolution(14, 14, 8, 16, 3, 2), make_transformer(128, 2, 1)},
      testing::stride_plan(4), 3);
  const auto path = scratch_dir() / "ds.csv";
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  CHECK(back.samples == ds.samples);
  CHECK(back.grid == ds.grid);
  CHECK(back.plan == ds.plan);
  CHECK(back.device_id == ds.device_id);
  CHECK(dataset_csv(back) == dataset_csv(ds));
  CHECK(io::read_text_file(path).rfind(
            "layer_type,config_json,f_c_ghz,f_g_ghz,context,cpu_ms,gpu_ms,delta_ms,total_ms,feature_0", 0) == 0);
}

TEST_CASE("truncated dataset reports a byte offset") {
  const auto device = devicesim::make_device(2);
  const auto ds = testing::profile(device, {make_linear(64, 64)}, testing::stride_plan(4), 3);
  const auto csv = dataset_csv(ds);
  const auto meta = dataset_metadata_json(ds);
  SUBCASE("cut inside a row") {
    const auto cut = csv.substr(0, csv.size() - 40);
    try {
      parse_dataset(cut, meta);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == cut.rfind('\n') + 1);
    }
  }
  SUBCASE("cut at a row boundary") {
    const auto cut = csv.substr(0, csv.rfind('\n', csv.size() - 2) + 1);
    try {
      parse_dataset(cut, meta);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == cut.size());
    }
  }
}

TEST_CASE("off-grid sample is rejected with its index") {
  const auto device = devicesim::make_device(2);
  auto ds = testing::profile(device, {make_linear(64, 64)}, testing::stride_plan(4), 3);
  ds.samples[5].f_c = Frequency(0.12345);
  try {
    parse_dataset(dataset_csv(ds), dataset_metadata_json(ds));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("sample 5") != std::string::npos);
  }
}

TEST_CASE("schema mismatch is rejected") {
  const auto device = devicesim::make_device(2);
  const auto ds = testing::profile(device, {make_linear(64, 64)}, testing::stride_plan(4), 3);
  auto meta = dataset_metadata_json(ds);
  const auto at = meta.find("flame.dataset/");
  REQUIRE(at != std::string::npos);
  meta.replace(at, 14, "other.dataset/");
  CHECK_THROWS_AS(parse_dataset(dataset_csv(ds), meta), ValidationError);
}

TEST_CASE("duplicate samples are rejected") {
  const auto device = devicesim::make_device(2);
  auto ds = testing::profile(device, {make_linear(64, 64)}, testing::stride_plan(4), 3);
  ds.samples.push_back(ds.samples.front());
  CHECK_THROWS_AS(validate_dataset(ds), ValidationError);
}
