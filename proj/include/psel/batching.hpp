#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace psel {

/// Fixed batch count for every Monte-Carlo standard error.
inline constexpr int kBatches = 32;

struct BatchRange {
  int index;
  long long begin;
  long long end;
};

std::vector<BatchRange> batch_ranges(long long total, int batches = kBatches);

int default_workers();

/// Runs fn(range) for every batch and returns the results in batch order.
/// Each batch is processed serially by one worker, so the output does not
/// depend on the worker count.
template <class Result, class Fn>
std::vector<Result> run_batches(long long total, int workers, Fn&& fn) {
  const auto ranges = batch_ranges(total);
  std::vector<Result> results(ranges.size());
  if (workers <= 1) {
    for (const auto& r : ranges) results[r.index] = fn(r);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= ranges.size()) return;
      try {
        results[i] = fn(ranges[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(workers, static_cast<int>(ranges.size()));
  pool.reserve(count);
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

/// Delete-one-batch jackknife. batch_sums[b] holds additive accumulators of
/// batch b; estimator maps a total accumulator vector to the statistic.
/// Returns {estimate on all batches, standard error}.
template <class Estimator>
std::pair<double, double> jackknife(const std::vector<std::vector<double>>& batch_sums, Estimator&& estimator) {
  const std::size_t B = batch_sums.size();
  const std::size_t width = B ? batch_sums.front().size() : 0;
  std::vector<double> total(width, 0.0);
  for (const auto& b : batch_sums)
    for (std::size_t i = 0; i < width; ++i) total[i] += b[i];
  const double full = estimator(total);
  if (B < 2) return {full, std::nan("")};
  std::vector<double> loo(B);
  std::vector<double> partial(width);
  double mean = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < width; ++i) partial[i] = total[i] - batch_sums[b][i];
    loo[b] = estimator(partial);
    mean += loo[b];
  }
  mean /= static_cast<double>(B);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  return {full, std::sqrt(ss * (static_cast<double>(B) - 1.0) / static_cast<double>(B))};
}

}  // namespace psel
