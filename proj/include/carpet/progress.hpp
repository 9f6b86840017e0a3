#pragma once

#include <functional>
#include <string_view>

#include "carpet/image.hpp"

namespace carpet {

/// Emitted once per optimizer iteration by every iterative stage.
struct IterationEvent {
  std::string_view stage;
  int iteration = 0;  // 0-based; `total` evaluations happen per run
  int total = 0;
  double loss = 0.0;
  /// Renders the current iterate; only call it when a preview is wanted.
  std::function<ImageTensor()> snapshot;
};

/// Observers may throw (e.g. Error{Cancelled}) to abort the running stage.
using IterationObserver = std::function<void(const IterationEvent&)>;

inline void notify(const IterationObserver* observer, const IterationEvent& event) {
  if (observer && *observer) (*observer)(event);
}

}  // namespace carpet
