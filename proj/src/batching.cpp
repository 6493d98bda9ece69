#include "psel/batching.hpp"

#include <algorithm>

namespace psel {

std::vector<BatchRange> batch_ranges(long long total, int batches) {
  std::vector<BatchRange> out;
  out.reserve(batches);
  const long long base = total / batches;
  const long long extra = total % batches;
  long long begin = 0;
  for (int b = 0; b < batches; ++b) {
    const long long size = base + (b < extra ? 1 : 0);
    out.push_back({b, begin, begin + size});
    begin += size;
  }
  return out;
}

int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace psel
