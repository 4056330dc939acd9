#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace prema {

// Thrown when tensor dimensions do not line up (matmul inner dims, concat
// off-axis shapes, conv kernel larger than the padded input, ...).
class shape_error : public std::runtime_error {
 public:
  explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an op produces or receives a non-finite value. The engine
// fails fast instead of letting NaNs poison a training run.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

class checkpoint_error : public std::runtime_error {
 public:
  explicit checkpoint_error(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic RNG wrapper. std::mt19937_64 produces a portable stream, but
// the standard distributions are implementation-defined, so uniform draws and
// shuffles are implemented here to keep generated datasets reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // First `count` entries of a seeded permutation of 0..n-1.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx);
    idx.resize(count);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

// Static block split of [0, n) over worker threads. Workers write to
// disjoint preallocated slots, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// FNV-1a over a string, mixed with a seed; used to derive independent
// per-shape RNG streams from (global_seed, shape_id).
inline std::uint64_t hash_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace prema
