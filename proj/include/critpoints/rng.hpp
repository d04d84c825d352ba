#ifndef CRITPOINTS_RNG_HPP
#define CRITPOINTS_RNG_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace critpoints {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of substream `stream` under `master`; distinct streams get
/// decorrelated seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng substream(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(master, stream)),
                    static_cast<std::uint32_t>(derive_seed(master, stream) >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}
}  // namespace detail

/// Worker count used by parallel loops; 0 means hardware concurrency.
inline void set_thread_count(int n) { detail::thread_setting() = std::max(0, n); }

inline int thread_count() {
  const int n = detail::thread_setting();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(task) for task in [0, n_tasks) on up to thread_count() workers.
/// Tasks must write to disjoint outputs; results do not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n_tasks, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n_tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) body(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < n_tasks; t = next++) {
        try {
          body(t);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n_tasks;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
struct RunningStats {
  long long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.n) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }

  double variance() const noexcept { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const noexcept { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

inline constexpr long long kChunkSize = 16384;

/// Monte Carlo driver: `n` draws split into fixed chunks, chunk k drawing from
/// substream(seed, k). `draw(rng, out)` fills `out` (length n_outputs) with one
/// sample of each estimated quantity. Output is independent of thread count.
template <class Draw>
std::vector<RunningStats> monte_carlo(std::size_t n_outputs, long long n, std::uint64_t seed, Draw&& draw) {
  const std::size_t chunks = static_cast<std::size_t>((n + kChunkSize - 1) / kChunkSize);
  std::vector<std::vector<RunningStats>> partial(chunks, std::vector<RunningStats>(n_outputs));
  parallel_for(chunks, [&](std::size_t k) {
    Rng rng = substream(seed, k);
    const long long begin = static_cast<long long>(k) * kChunkSize;
    const long long end = std::min(n, begin + kChunkSize);
    std::vector<double> out(n_outputs);
    auto& stats = partial[k];
    for (long long s = begin; s < end; ++s) {
      draw(rng, out);
      for (std::size_t j = 0; j < n_outputs; ++j) stats[j].add(out[j]);
    }
  });
  std::vector<RunningStats> total(n_outputs);
  for (const auto& p : partial)
    for (std::size_t j = 0; j < n_outputs; ++j) total[j].merge(p[j]);
  return total;
}

}  // namespace critpoints

#endif  // CRITPOINTS_RNG_HPP
