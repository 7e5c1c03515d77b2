#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "fera/core.hpp"
#include "fera/shape.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("fera_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline fera::LandmarkSequence make_sequence(const std::vector<fera::Shape>& shapes) {
  fera::LandmarkSequence seq;
  for (const auto& s : shapes) {
    fera::LandmarkFrame f;
    f.points = s;
    f.tracked = true;
    seq.frames.push_back(f);
  }
  return seq;
}

// A mildly irregular but non-degenerate 66-point layout for tests that only
// need "some valid shape".
inline fera::Shape test_shape(unsigned seed = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  fera::Shape s;
  for (int i = 0; i < fera::kNumLandmarks; ++i) {
    double a = 2.0 * 3.141592653589793 * i / fera::kNumLandmarks;
    s[i] = {50.0 * std::cos(a) + jitter(rng), 35.0 * std::sin(a) + jitter(rng)};
  }
  return s;
}

}  // namespace testutil
