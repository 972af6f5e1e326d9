#include "v2r/runner.hpp"

#include <future>
#include <utility>

namespace v2r {

void run_sequence(Compositor& comp, int count, const FrameSource& scene, const FrameSource& feed,
                  const FrameSink& sink, bool pipelined) {
  struct Ahead {
    Image scene;
    Detections det;
  };
  auto stage = [&](int k) {
    Image img = scene(k);
    Detections det = comp.detect(img);
    return Ahead{std::move(img), std::move(det)};
  };
  if (count <= 0) return;
  if (!pipelined) {
    for (int k = 0; k < count; ++k) {
      Ahead a = stage(k);
      sink(k, comp.apply(a.scene, feed(k), a.det));
    }
    return;
  }
  std::future<Ahead> next = std::async(std::launch::async, stage, 0);
  for (int k = 0; k < count; ++k) {
    Ahead cur = next.get();
    if (k + 1 < count) next = std::async(std::launch::async, stage, k + 1);
    FrameResult r = comp.apply(cur.scene, feed(k), cur.det);
    sink(k, std::move(r));
  }
}

}  // namespace v2r
