#pragma once

#include <algorithm>
#include <filesystem>

#include "image_io.hpp"

namespace snndhz {

struct Sample {
  std::string name;  // filename, identical in both directories
  Tensor hazy;
  Tensor ref;
};

struct Dataset {
  std::vector<Sample> samples;
  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

namespace dataset_detail {

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

inline std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace dataset_detail

// Pairs images by exact filename. Every file in either directory must have a
// counterpart in the other; an unmatched file is an error, not a skip.
inline Dataset load_dataset(const std::string& hazy_dir, const std::string& ref_dir,
                            int resolution) {
  namespace fs = std::filesystem;
  std::vector<std::string> hazy = dataset_detail::list_images(hazy_dir);
  std::vector<std::string> ref = dataset_detail::list_images(ref_dir);
  for (const std::string& n : ref)
    if (!std::binary_search(hazy.begin(), hazy.end(), n))
      throw IoError("reference image without hazy counterpart: " + n);
  Dataset ds;
  for (const std::string& n : hazy) {
    if (!std::binary_search(ref.begin(), ref.end(), n))
      throw IoError("hazy image without reference counterpart: " + n);
    Sample s;
    s.name = n;
    s.hazy = load_image_resized((fs::path(hazy_dir) / n).string(), resolution);
    s.ref = load_image_resized((fs::path(ref_dir) / n).string(), resolution);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace snndhz
