#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace snndhz {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major float32 tensor. All arithmetic in the engine is float32;
// doubles appear only in reductions where accumulation error would be visible.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<long>(data.size()) != shape_numel(shape))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    long n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), 0.0f));
  }

  static Tensor full(Shape s, float v) {
    long n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), v));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  long numel() const { return static_cast<long>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

// Deterministic RNG. uniform() maps mt19937 draws directly so results do not
// depend on the standard library's distribution implementation.
struct Rng {
  std::mt19937 gen;

  explicit Rng(uint64_t seed) : gen(static_cast<uint32_t>(seed)) {}

  float uniform(float lo, float hi) {
    // 24 random bits -> [0,1) exactly representable in float.
    uint32_t r = gen() >> 8;
    float u = static_cast<float>(r) * (1.0f / 16777216.0f);
    return lo + (hi - lo) * u;
  }

  Tensor uniform_tensor(Shape s, float lo, float hi) {
    Tensor t = Tensor::zeros(std::move(s));
    for (float& v : t.data) v = uniform(lo, hi);
    return t;
  }

  // Fisher-Yates with bounded draws; bias from modulo is irrelevant here but
  // rejection keeps it exact and still deterministic.
  void shuffle_indices(std::vector<int>& idx) {
    for (size_t i = idx.size(); i > 1; --i) {
      uint32_t bound = static_cast<uint32_t>(i);
      uint32_t limit = UINT32_MAX - UINT32_MAX % bound;
      uint32_t r;
      do {
        r = gen();
      } while (r >= limit);
      std::swap(idx[i - 1], idx[r % bound]);
    }
  }
};

// C (+)= op(A) * op(B). A is MxK after optional transpose, B is KxN, C is MxN.
// Loop orders keep the innermost index contiguous so the compiler vectorizes.
inline void mm(const float* A, const float* B, float* C, int M, int K, int N, bool trans_a,
               bool trans_b, bool accumulate) {
  if (!accumulate) std::memset(C, 0, sizeof(float) * static_cast<size_t>(M) * N);
  if (!trans_a && !trans_b) {
    for (int i = 0; i < M; ++i) {
      const float* a = A + static_cast<size_t>(i) * K;
      float* c = C + static_cast<size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        float av = a[k];
        if (av == 0.0f) continue;  // spike trains are mostly zeros
        const float* b = B + static_cast<size_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (trans_a && !trans_b) {
    // A stored KxM
    for (int k = 0; k < K; ++k) {
      const float* a = A + static_cast<size_t>(k) * M;
      const float* b = B + static_cast<size_t>(k) * N;
      for (int i = 0; i < M; ++i) {
        float av = a[i];
        if (av == 0.0f) continue;
        float* c = C + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // B stored NxK; C[i,j] = dot(A[i,:], B[j,:])
    for (int i = 0; i < M; ++i) {
      const float* a = A + static_cast<size_t>(i) * K;
      float* c = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) {
        const float* b = B + static_cast<size_t>(j) * K;
        float acc = 0.0f;
        for (int k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  } else {
    // C[i,j] = sum_k A[k,i] * B[j,k]
    for (int i = 0; i < M; ++i) {
      float* c = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) {
        const float* b = B + static_cast<size_t>(j) * K;
        float acc = 0.0f;
        for (int k = 0; k < K; ++k) acc += A[static_cast<size_t>(k) * M + i] * b[k];
        c[j] += acc;
      }
    }
  }
}

inline double sum_double(const float* p, long n) {
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += p[i];
  return s;
}

inline long count_nonzero(const Tensor& t) {
  long c = 0;
  for (float v : t.data)
    if (v != 0.0f) ++c;
  return c;
}

}  // namespace snndhz
