#pragma once

#include <functional>

#include "v2r/compositor.hpp"

namespace v2r {

using FrameSource = std::function<Image(int)>;
using FrameSink = std::function<void(int, FrameResult&&)>;

/// Composes frames [0, count) in order. With `pipelined`, loading and
/// detection of frame k+1 run on a worker while frame k is applied; the
/// results are identical either way. `scene` must be safe to call from a
/// second thread.
void run_sequence(Compositor& comp, int count, const FrameSource& scene, const FrameSource& feed,
                  const FrameSink& sink, bool pipelined = true);

}  // namespace v2r
