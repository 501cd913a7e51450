#pragma once

#include <cstddef>
#include <queue>
#include <tuple>
#include <vector>

// Discrete-event replay of one inference: a CPU stream that prepares layers
// back to back, and a single in-order GPU queue. Kernels are handed to the
// queue at cpu_end + delta (not before t = 0) and run when the GPU is idle.
namespace flame::oracle {

struct LayerInput {
  double cpu_ms;
  double gpu_ms;
  double delta_ms;
};

struct Interval {
  double start;
  double end;
};

struct EventTimeline {
  std::vector<Interval> cpu;
  std::vector<Interval> gpu;
  double total_ms = 0.0;
};

inline EventTimeline replay(const std::vector<LayerInput>& layers) {
  enum Kind { kGpuDone = 0, kDispatch = 1 };
  using Event = std::tuple<double, int, std::size_t>;  // time, kind, layer
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;

  EventTimeline out;
  double clock = 0.0;
  for (const auto& l : layers) {
    out.cpu.push_back({clock, clock + l.cpu_ms});
    clock += l.cpu_ms;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    double ready = out.cpu[i].end + layers[i].delta_ms;
    if (ready < 0.0) ready = 0.0;
    events.emplace(ready, kDispatch, i);
  }

  out.gpu.assign(layers.size(), {0.0, 0.0});
  std::vector<bool> dispatched(layers.size(), false);
  std::size_t next = 0;
  bool busy = false;
  while (!events.empty()) {
    const auto [t, kind, layer] = events.top();
    events.pop();
    if (kind == kDispatch) dispatched[layer] = true;
    if (kind == kGpuDone) busy = false;
    if (!busy && next < layers.size() && dispatched[next]) {
      out.gpu[next] = {t, t + layers[next].gpu_ms};
      events.emplace(t + layers[next].gpu_ms, kGpuDone, next);
      busy = true;
      ++next;
    }
  }
  out.total_ms = layers.empty() ? 0.0 : out.gpu.back().end;
  return out;
}

}  // namespace flame::oracle
