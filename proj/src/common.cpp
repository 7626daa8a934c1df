#include "dgt/common.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace dgt {

int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

int worker_count(std::size_t jobs) {
  int cap = hardware_threads();
  if (const char* env = std::getenv("DGT_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 0) throw ConfigError("DGT_THREADS must be a non-negative integer");
    if (v > 0) cap = static_cast<int>(v);
  }
  if (jobs < static_cast<std::size_t>(cap)) cap = static_cast<int>(jobs);
  return cap < 1 ? 1 : cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const int workers = worker_count(n);
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }
void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, 8); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, 8); }

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

void put_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw DataError(std::string("truncated file while reading ") + what);
}

std::uint8_t get_u8(std::istream& is, const char* what) {
  std::uint8_t v;
  get_bytes(is, &v, 1, what);
  return v;
}
std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint32_t v;
  get_bytes(is, &v, 4, what);
  return v;
}
std::uint64_t get_u64(std::istream& is, const char* what) {
  std::uint64_t v;
  get_bytes(is, &v, 8, what);
  return v;
}
double get_f64(std::istream& is, const char* what) {
  double v;
  get_bytes(is, &v, 8, what);
  return v;
}

std::string get_str(std::istream& is, const char* what) {
  std::uint32_t n = get_u32(is, what);
  if (n > (1u << 20)) throw DataError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  if (n) get_bytes(is, s.data(), n, what);
  return s;
}

Matrix get_matrix(std::istream& is, std::size_t rows, std::size_t cols, const char* what) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_f64(is, what);
  return m;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace dgt
