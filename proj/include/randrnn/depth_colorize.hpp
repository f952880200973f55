#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "randrnn/tensor_io.hpp"

namespace randrnn {

/// Metric depth raster in meters; 0 marks a missing measurement.
struct DepthFrame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> depth;  // row-major

  float at(std::size_t u, std::size_t v) const { return depth[v * width + u]; }
  float& at(std::size_t u, std::size_t v) { return depth[v * width + u]; }
  void validate() const;
};

struct CameraIntrinsics {
  double fx = 570.3;
  double fy = 570.3;
  double cx = 320.0;
  double cy = 240.0;

  void validate() const;
};

using Point3 = std::array<double, 3>;

/// Organized cloud on the depth raster.
struct PointCloud {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Point3> points;
  std::vector<std::uint8_t> valid;

  const Point3& at(std::size_t u, std::size_t v) const { return points[v * width + u]; }
  bool is_valid(std::size_t u, std::size_t v) const { return valid[v * width + u] != 0; }
};

using Normal3 = std::array<float, 3>;

/// Unit surface normals; invalid pixels hold the zero vector.
struct NormalImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Normal3> normals;
  std::vector<std::uint8_t> valid;

  const Normal3& at(std::size_t u, std::size_t v) const { return normals[v * width + u]; }
};

/// 8-bit interleaved RGB.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel
};

enum class ResizeMode {
  square,      // both sides to 256
  short_side,  // short side to 256, aspect kept
};

inline constexpr std::size_t kResizeTarget = 256;
inline constexpr std::size_t kCropSize = 224;
inline constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

/// Fills holes with the median of valid pixels in the 5x5 neighbourhood
/// (border replicated; even counts average the two middle values). Passes
/// repeat on the partially filled frame until nothing changes or
/// `max_passes` is reached; originally valid pixels are never modified.
DepthFrame fill_missing_depth(const DepthFrame& d, std::size_t max_passes = 10);

/// Pinhole back-projection; zero depth marks the point invalid.
PointCloud depth_to_pointcloud(const DepthFrame& d, const CameraIntrinsics& k);

/// normalize(dX x dY) from central differences (one-sided where a neighbour is
/// missing or off-raster), flipped to face the camera: dot(n, P) <= 0.
NormalImage estimate_normals(const PointCloud& pc);

/// Nearest-neighbour resize to 256 then central 224x224 crop; output values
/// are always a subset of the input values.
NormalImage resize_center_crop_depthlike(const NormalImage& img, ResizeMode mode = ResizeMode::square);

/// Divides channel c by the ImageNet std; no mean subtraction.
ActivationTensor standardize_depth(const NormalImage& img);

/// (x/255 - mean_c) / std_c for one 0..255-scaled value.
double standardize_rgb_value(double value_255, std::size_t channel);

/// Bilinear resize to 256, central 224 crop, ImageNet z-score.
ActivationTensor standardize_rgb(const RgbImage& img, ResizeMode mode = ResizeMode::square);

/// Full depth front-end: fill -> cloud -> normals -> resize/crop -> scale.
ActivationTensor colorize_depth(const DepthFrame& d, const CameraIntrinsics& k, ResizeMode mode = ResizeMode::square,
                                std::size_t max_passes = 10);

/// 16-bit PNG; raw units times `depth_scale` gives meters.
DepthFrame read_depth_png(const std::filesystem::path& path, double depth_scale = 0.001);
RgbImage read_rgb_image(const std::filesystem::path& path);

}  // namespace randrnn
