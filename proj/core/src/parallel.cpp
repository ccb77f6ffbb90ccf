#include "opdyn/parallel.hpp"

#include <cstdlib>
#include <string>

namespace opdyn {

int resolve_threads(int requested) {
  int cap = 0;
  if (const char* env = std::getenv("OPDYN_THREADS")) {
    try {
      cap = std::stoi(env);
    } catch (...) {
      cap = 0;
    }
  }
  int n = requested;
  if (n <= 0) n = cap > 0 ? cap : static_cast<int>(std::thread::hardware_concurrency());
  if (cap > 0) n = std::min(n, cap);
  return std::max(1, n);
}

}  // namespace opdyn
