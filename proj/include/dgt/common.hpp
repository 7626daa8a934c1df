#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

// Error taxonomy mirrors the CLI exit codes: config 2, data 3, divergence 4, eval 5.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  int epoch = -1;
  DivergenceError(const std::string& msg, int at_epoch)
      : std::runtime_error(msg), epoch(at_epoch) {}
};
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled value mapping; std::*_distribution output is
// implementation-defined, which would break run reproducibility promises.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one value per call; cached pair member would add state order
  // coupling, so the spare is simply discarded.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

int hardware_threads();

// DGT_THREADS caps worker count; 0/unset means hardware concurrency.
int worker_count(std::size_t jobs);

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per worker.
// Each index is processed exactly once, so writers into disjoint slots stay
// deterministic regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// ---- binary stream helpers ----------------------------------------------

void put_bytes(std::ostream& os, const void* p, std::size_t n);
void put_u8(std::ostream& os, std::uint8_t v);
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
void put_str(std::ostream& os, const std::string& s);
void put_matrix(std::ostream& os, const Matrix& m);  // row-major payload

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what);
std::uint8_t get_u8(std::istream& is, const char* what);
std::uint32_t get_u32(std::istream& is, const char* what);
std::uint64_t get_u64(std::istream& is, const char* what);
double get_f64(std::istream& is, const char* what);
std::string get_str(std::istream& is, const char* what);
Matrix get_matrix(std::istream& is, std::size_t rows, std::size_t cols, const char* what);

// Shortest-exact decimal for doubles; keeps CSV/JSON output byte-stable.
std::string fmt_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace dgt
