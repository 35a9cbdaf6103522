#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tensor.hpp"

namespace snndhz {

namespace image_detail {

inline cv::Mat to_mat(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("image: expected [3,H,W]");
  int h = t.dim(1), w = t.dim(2);
  cv::Mat m(h, w, CV_32FC3);
  long hw = static_cast<long>(h) * w;
  const float* r = t.ptr();
  const float* g = r + hw;
  const float* b = g + hw;
  for (int y = 0; y < h; ++y) {
    cv::Vec3f* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < w; ++x) {
      long i = static_cast<long>(y) * w + x;
      row[x] = cv::Vec3f(b[i], g[i], r[i]);  // OpenCV stores BGR
    }
  }
  return m;
}

inline Tensor from_mat(const cv::Mat& m) {
  Tensor t = Tensor::zeros({3, m.rows, m.cols});
  long hw = static_cast<long>(m.rows) * m.cols;
  float* r = t.ptr();
  float* g = r + hw;
  float* b = g + hw;
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3f* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < m.cols; ++x) {
      long i = static_cast<long>(y) * m.cols + x;
      b[i] = row[x][0];
      g[i] = row[x][1];
      r[i] = row[x][2];
    }
  }
  return t;
}

}  // namespace image_detail

// Decodes to [3,H,W] RGB floats in [0,1].
inline Tensor load_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image: " + path);
  cv::Mat f;
  img.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return image_detail::from_mat(f);
}

inline Tensor resize_bilinear(const Tensor& t, int h, int w) {
  if (h < 1 || w < 1) throw ShapeError("resize: target dims must be positive");
  if (t.dim(1) == h && t.dim(2) == w) return t;
  cv::Mat m = image_detail::to_mat(t);
  cv::Mat out;
  cv::resize(m, out, cv::Size(w, h), 0.0, 0.0, cv::INTER_LINEAR);
  return image_detail::from_mat(out);
}

inline Tensor load_image_resized(const std::string& path, int resolution) {
  return resize_bilinear(load_image(path), resolution, resolution);
}

// Clamps to [0,1] and quantizes to 8-bit.
inline void save_image_png(const Tensor& t, const std::string& path) {
  cv::Mat m = image_detail::to_mat(t);
  cv::Mat clamped;
  cv::min(cv::max(m, 0.0f), 1.0f, clamped);
  cv::Mat u8;
  clamped.convertTo(u8, CV_8UC3, 255.0);
  if (!cv::imwrite(path, u8)) throw IoError("cannot write image: " + path);
}

}  // namespace snndhz
