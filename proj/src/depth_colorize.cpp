#include "randrnn/depth_colorize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "randrnn/error.hpp"

namespace randrnn {

namespace {

Point3 sub(const Point3& a, const Point3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point3 cross(const Point3& a, const Point3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Point3& a, const Point3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

struct ResizedSize {
  int width;
  int height;
};

ResizedSize resized_size(std::size_t width, std::size_t height, ResizeMode mode) {
  if (mode == ResizeMode::square) return {static_cast<int>(kResizeTarget), static_cast<int>(kResizeTarget)};
  const double scale = static_cast<double>(kResizeTarget) / static_cast<double>(std::min(width, height));
  auto scaled = [&](std::size_t extent) {
    return std::max(static_cast<int>(kResizeTarget), static_cast<int>(std::lround(static_cast<double>(extent) * scale)));
  };
  return {width <= height ? static_cast<int>(kResizeTarget) : scaled(width),
          height <= width ? static_cast<int>(kResizeTarget) : scaled(height)};
}

cv::Rect center_crop(int width, int height) {
  const int crop = static_cast<int>(kCropSize);
  return {(width - crop) / 2, (height - crop) / 2, crop, crop};
}

// Difference along one raster axis around (u, v): central where both
// neighbours are valid, one-sided where only one is.
bool axis_difference(const PointCloud& pc, std::size_t u, std::size_t v, bool horizontal, Point3& out) {
  const std::size_t pos = horizontal ? u : v;
  const std::size_t extent = horizontal ? pc.width : pc.height;
  auto valid_at = [&](std::size_t p) { return horizontal ? pc.is_valid(p, v) : pc.is_valid(u, p); };
  auto point_at = [&](std::size_t p) -> const Point3& { return horizontal ? pc.at(p, v) : pc.at(u, p); };
  const bool prev = pos > 0 && valid_at(pos - 1);
  const bool next = pos + 1 < extent && valid_at(pos + 1);
  if (prev && next)
    out = sub(point_at(pos + 1), point_at(pos - 1));
  else if (next)
    out = sub(point_at(pos + 1), point_at(pos));
  else if (prev)
    out = sub(point_at(pos), point_at(pos - 1));
  else
    return false;
  return true;
}

}  // namespace

void DepthFrame::validate() const {
  if (width < 5 || height < 5) throw ValidationError(fmt::format("depth frame {}x{} smaller than 5x5", width, height));
  if (depth.size() != width * height) throw ValidationError("depth buffer does not match frame size");
  for (const float z : depth)
    if (!std::isfinite(z) || z < 0.0f) throw ValidationError(fmt::format("invalid depth value {}", z));
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("focal lengths must be positive");
}

DepthFrame fill_missing_depth(const DepthFrame& d, std::size_t max_passes) {
  d.validate();
  if (std::all_of(d.depth.begin(), d.depth.end(), [](float z) { return z == 0.0f; }))
    throw ValidationError("depth frame has no valid pixel to interpolate from");

  DepthFrame out = d;
  std::vector<float> neighbours;
  neighbours.reserve(24);
  const auto w = static_cast<std::ptrdiff_t>(d.width);
  const auto h = static_cast<std::ptrdiff_t>(d.height);
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    const DepthFrame snapshot = out;
    std::size_t changed = 0;
    for (std::ptrdiff_t v = 0; v < h; ++v)
      for (std::ptrdiff_t u = 0; u < w; ++u) {
        if (snapshot.depth[static_cast<std::size_t>(v * w + u)] != 0.0f) continue;
        neighbours.clear();
        for (std::ptrdiff_t dv = -2; dv <= 2; ++dv)
          for (std::ptrdiff_t du = -2; du <= 2; ++du) {
            if (du == 0 && dv == 0) continue;
            const auto uu = std::clamp<std::ptrdiff_t>(u + du, 0, w - 1);
            const auto vv = std::clamp<std::ptrdiff_t>(v + dv, 0, h - 1);
            const float z = snapshot.depth[static_cast<std::size_t>(vv * w + uu)];
            if (z > 0.0f) neighbours.push_back(z);
          }
        if (neighbours.empty()) continue;
        std::sort(neighbours.begin(), neighbours.end());
        const std::size_t n = neighbours.size();
        const double median = n % 2 == 1 ? neighbours[n / 2]
                                         : 0.5 * (static_cast<double>(neighbours[n / 2 - 1]) + neighbours[n / 2]);
        out.depth[static_cast<std::size_t>(v * w + u)] = static_cast<float>(median);
        ++changed;
      }
    if (changed == 0) break;
  }
  return out;
}

PointCloud depth_to_pointcloud(const DepthFrame& d, const CameraIntrinsics& k) {
  k.validate();
  if (d.depth.size() != d.width * d.height) throw ValidationError("depth buffer does not match frame size");
  PointCloud pc;
  pc.width = d.width;
  pc.height = d.height;
  pc.points.assign(d.depth.size(), Point3{0.0, 0.0, 0.0});
  pc.valid.assign(d.depth.size(), 0);
  for (std::size_t v = 0; v < d.height; ++v)
    for (std::size_t u = 0; u < d.width; ++u) {
      const double z = d.at(u, v);
      if (!(z > 0.0)) continue;
      const std::size_t i = v * d.width + u;
      pc.points[i] = {(static_cast<double>(u) - k.cx) * z / k.fx, (static_cast<double>(v) - k.cy) * z / k.fy, z};
      pc.valid[i] = 1;
    }
  return pc;
}

NormalImage estimate_normals(const PointCloud& pc) {
  NormalImage img;
  img.width = pc.width;
  img.height = pc.height;
  img.normals.assign(pc.width * pc.height, Normal3{0.0f, 0.0f, 0.0f});
  img.valid.assign(pc.width * pc.height, 0);
  for (std::size_t v = 0; v < pc.height; ++v)
    for (std::size_t u = 0; u < pc.width; ++u) {
      if (!pc.is_valid(u, v)) continue;
      Point3 dx{};
      Point3 dy{};
      if (!axis_difference(pc, u, v, true, dx) || !axis_difference(pc, u, v, false, dy)) continue;
      Point3 n = cross(dx, dy);
      const double len = std::sqrt(dot(n, n));
      if (!(len > 1e-12)) continue;
      const double sign = dot(n, pc.at(u, v)) > 0.0 ? -1.0 : 1.0;
      const std::size_t i = v * pc.width + u;
      img.normals[i] = {static_cast<float>(sign * n[0] / len), static_cast<float>(sign * n[1] / len),
                        static_cast<float>(sign * n[2] / len)};
      img.valid[i] = 1;
    }
  return img;
}

NormalImage resize_center_crop_depthlike(const NormalImage& img, ResizeMode mode) {
  if (img.width == 0 || img.height == 0) throw ValidationError("empty normal image");
  const int w = static_cast<int>(img.width);
  const int h = static_cast<int>(img.height);
  cv::Mat normals(h, w, CV_32FC3, const_cast<Normal3*>(img.normals.data()));
  cv::Mat valid(h, w, CV_8UC1, const_cast<std::uint8_t*>(img.valid.data()));
  const auto size = resized_size(img.width, img.height, mode);
  cv::Mat normals_r;
  cv::Mat valid_r;
  cv::resize(normals, normals_r, cv::Size(size.width, size.height), 0, 0, cv::INTER_NEAREST_EXACT);
  cv::resize(valid, valid_r, cv::Size(size.width, size.height), 0, 0, cv::INTER_NEAREST_EXACT);
  const auto roi = center_crop(size.width, size.height);
  const cv::Mat normals_c = normals_r(roi).clone();
  const cv::Mat valid_c = valid_r(roi).clone();

  NormalImage out;
  out.width = kCropSize;
  out.height = kCropSize;
  out.normals.resize(kCropSize * kCropSize);
  out.valid.resize(kCropSize * kCropSize);
  std::memcpy(out.normals.data(), normals_c.data, out.normals.size() * sizeof(Normal3));
  std::memcpy(out.valid.data(), valid_c.data, out.valid.size());
  return out;
}

ActivationTensor standardize_depth(const NormalImage& img) {
  if (img.width != kCropSize || img.height != kCropSize)
    throw ShapeError(fmt::format("expected {0}x{0} normal image, got {1}x{2}", kCropSize, img.width, img.height));
  auto t = ActivationTensor::zeros({3, kCropSize, kCropSize});
  const std::size_t plane = kCropSize * kCropSize;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < plane; ++p)
      t.data[c * plane + p] = static_cast<float>(static_cast<double>(img.normals[p][c]) / kImageNetStd[c]);
  return t;
}

double standardize_rgb_value(double value_255, std::size_t channel) {
  return (value_255 / 255.0 - kImageNetMean.at(channel)) / kImageNetStd.at(channel);
}

ActivationTensor standardize_rgb(const RgbImage& img, ResizeMode mode) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3)
    throw ValidationError("malformed RGB image");
  const cv::Mat src(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3,
                    const_cast<std::uint8_t*>(img.pixels.data()));
  const auto size = resized_size(img.width, img.height, mode);
  cv::Mat resized;
  cv::resize(src, resized, cv::Size(size.width, size.height), 0, 0, cv::INTER_LINEAR);
  const cv::Mat crop = resized(center_crop(size.width, size.height));

  auto t = ActivationTensor::zeros({3, kCropSize, kCropSize});
  const std::size_t plane = kCropSize * kCropSize;
  for (std::size_t y = 0; y < kCropSize; ++y) {
    const auto* row = crop.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < kCropSize; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t.data[c * plane + y * kCropSize + x] = static_cast<float>(standardize_rgb_value(row[x * 3 + c], c));
  }
  return t;
}

ActivationTensor colorize_depth(const DepthFrame& d, const CameraIntrinsics& k, ResizeMode mode,
                                std::size_t max_passes) {
  const auto filled = fill_missing_depth(d, max_passes);
  const auto normals = estimate_normals(depth_to_pointcloud(filled, k));
  return standardize_depth(resize_center_crop_depthlike(normals, mode));
}

DepthFrame read_depth_png(const std::filesystem::path& path, double depth_scale) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw IoError(fmt::format("cannot decode depth image {}", path.string()));
  if (raw.depth() != CV_16U) throw FormatError(fmt::format("{}: depth PNG must be 16-bit", path.string()));
  DepthFrame d;
  d.width = static_cast<std::size_t>(raw.cols);
  d.height = static_cast<std::size_t>(raw.rows);
  d.depth.resize(d.width * d.height);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<std::uint16_t>(y);
    for (int x = 0; x < raw.cols; ++x)
      d.depth[static_cast<std::size_t>(y) * d.width + static_cast<std::size_t>(x)] =
          static_cast<float>(row[x] * depth_scale);
  }
  return d;
}

RgbImage read_rgb_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError(fmt::format("cannot decode image {}", path.string()));
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage img;
  img.width = static_cast<std::size_t>(rgb.cols);
  img.height = static_cast<std::size_t>(rgb.rows);
  img.pixels.resize(img.width * img.height * 3);
  for (int y = 0; y < rgb.rows; ++y)
    std::memcpy(img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3, rgb.ptr<std::uint8_t>(y),
                img.width * 3);
  return img;
}

}  // namespace randrnn
