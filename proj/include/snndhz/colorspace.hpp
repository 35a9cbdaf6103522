#pragma once

#include "tensor.hpp"

namespace snndhz {

// sRGB decoding and CIELAB under D65. The white point is exactly the row sums
// of the RGB->XYZ matrix, so a (1,1,1) input lands on L=100, A=B=0.

inline float srgb_to_linear(float c) {
  return c <= 0.04045f ? c / 12.92f : std::pow((c + 0.055f) / 1.055f, 2.4f);
}

namespace colorspace_detail {
constexpr float kXyz[9] = {0.412453f, 0.357580f, 0.180423f, 0.212671f, 0.715160f,
                           0.072169f, 0.019334f, 0.119193f, 0.950227f};
constexpr float kXn = 0.412453f + 0.357580f + 0.180423f;
constexpr float kYn = 0.212671f + 0.715160f + 0.072169f;
constexpr float kZn = 0.019334f + 0.119193f + 0.950227f;

inline float lab_f(float u) {
  return u > 0.008856f ? std::cbrt(u) : 7.787f * u + 4.0f / 29.0f;
}
}  // namespace colorspace_detail

// Linear RGB -> XYZ.
inline void rgb_linear_to_xyz(float r, float g, float b, float& x, float& y, float& z) {
  using namespace colorspace_detail;
  x = kXyz[0] * r + kXyz[1] * g + kXyz[2] * b;
  y = kXyz[3] * r + kXyz[4] * g + kXyz[5] * b;
  z = kXyz[6] * r + kXyz[7] * g + kXyz[8] * b;
}

// Gamma-encoded sRGB in [0,1] -> raw CIELAB (L in [0,100], A/B roughly ±128).
inline void rgb_to_lab_pixel(float r, float g, float b, float& L, float& A, float& B) {
  using namespace colorspace_detail;
  float x, y, z;
  rgb_linear_to_xyz(srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b), x, y, z);
  float fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  // 116*4/29 == 16 exactly, and this form makes black cancel to L = 0 in
  // float instead of landing an ulp off zero.
  L = 116.0f * (fy - 4.0f / 29.0f);
  A = 500.0f * (fx - fy);
  B = 200.0f * (fy - fz);
}

// Network-facing normalization: L/100 in [0,1]; chroma zero-centered as A/256
// and B/256 (within ±0.5), so an all-black image maps to exact zeros and the
// LAB branch stays quiescent on it.
inline void normalize_lab(float& L, float& A, float& B) {
  L *= (1.0f / 100.0f);
  A *= (1.0f / 256.0f);
  B *= (1.0f / 256.0f);
}

// [3,H,W] RGB frame in [0,1] -> [3,H,W] normalized LAB planes.
inline Tensor rgb_frame_to_lab(const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw ShapeError("rgb_frame_to_lab: expected [3,H,W], got " + shape_str(frame.shape));
  long hw = static_cast<long>(frame.dim(1)) * frame.dim(2);
  const float* r = frame.ptr();
  const float* g = r + hw;
  const float* b = g + hw;
  Tensor out = Tensor::zeros(frame.shape);
  float* L = out.ptr();
  float* A = L + hw;
  float* B = A + hw;
  for (long i = 0; i < hw; ++i) {
    if (r[i] < 0.0f || r[i] > 1.0f || g[i] < 0.0f || g[i] > 1.0f || b[i] < 0.0f || b[i] > 1.0f)
      throw NumericError("rgb_frame_to_lab: input outside [0,1]");
    rgb_to_lab_pixel(r[i], g[i], b[i], L[i], A[i], B[i]);
    normalize_lab(L[i], A[i], B[i]);
  }
  return out;
}

// [T,3,H,W] -> [T,3,H,W], frame-wise. Pure per-pixel input transform; it sits
// before the first weighted layer, so it is not differentiated.
inline Tensor rgb_to_lab_sequence(const Tensor& seq) {
  if (seq.rank() != 4 || seq.dim(1) != 3)
    throw ShapeError("rgb_to_lab_sequence: expected [T,3,H,W], got " + shape_str(seq.shape));
  Tensor out = Tensor::zeros(seq.shape);
  long frame_n = static_cast<long>(seq.dim(1)) * seq.dim(2) * seq.dim(3);
  for (int t = 0; t < seq.dim(0); ++t) {
    Tensor frame({3, seq.dim(2), seq.dim(3)},
                 std::vector<float>(seq.data.begin() + t * frame_n,
                                    seq.data.begin() + (t + 1) * frame_n));
    Tensor lab = rgb_frame_to_lab(frame);
    std::copy(lab.data.begin(), lab.data.end(), out.data.begin() + t * frame_n);
  }
  return out;
}

}  // namespace snndhz
