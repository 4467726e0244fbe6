#pragma once

#include <exception>
#include <mutex>

namespace bcot {

// Runs body(i) for i in [0, count), in parallel when OpenMP is enabled.
// An exception thrown by any iteration is rethrown on the calling thread
// after the loop; the first one wins.
template <typename Body>
void parallel_for(int count, Body&& body, bool dynamic = false) {
  std::exception_ptr error;
  std::mutex guard;
  auto run = [&](int i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  };
  if (dynamic) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) run(i);
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) run(i);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace bcot
