#pragma once

// Shared helpers for the unit and acceptance test binaries.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>

#include <Eigen/Dense>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"
#include "stratgeo/tensorio.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stratgeo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Runs fn and returns the stratgeo error code it threw, or nullopt if it did not throw one.
template <typename Fn>
std::optional<stratgeo::ErrorCode> error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const stratgeo::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                       double scale = 1.0) {
  stratgeo::rng::SplitMix64 gen(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * stratgeo::rng::normal(gen);
  return m;
}

inline Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                      double lo = 0.0, double hi = 1.0) {
  stratgeo::rng::SplitMix64 gen(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = lo + (hi - lo) * stratgeo::rng::uniform(gen);
  return m;
}

// Orthogonal matrix from the QR factor of a Gaussian matrix.
inline Eigen::MatrixXd random_rotation(Eigen::Index n, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(n, n, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

inline stratgeo::TokenTensor token_tensor(std::size_t batch, std::size_t seq, std::size_t width,
                                          std::uint64_t seed, double scale = 1.0) {
  stratgeo::TokenTensor t;
  t.batch_size = batch;
  t.seq_len = seq;
  t.width = width;
  stratgeo::rng::SplitMix64 gen(seed);
  t.data.resize(batch * seq * width);
  for (auto& v : t.data) v = static_cast<float>(scale * stratgeo::rng::normal(gen));
  t.mask.assign(batch * seq, 1);
  return t;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// Fixed-point and scientific renderings for report lines.
inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

inline std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << v;
  return os.str();
}

}  // namespace testing
