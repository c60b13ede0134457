#include "core/imageio.hpp"

#include <cmath>
#include <filesystem>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace foodpipe::io {

namespace {

// Single worker keeps OpenCV results independent of the host's thread count.
struct OpenCvSetup {
  OpenCvSetup() { cv::setNumThreads(1); }
};
const OpenCvSetup opencv_setup;

cv::Mat to_bgr_mat(const RgbImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<uint8_t*>(image.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

RgbImage from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage image;
  image.width = rgb.cols;
  image.height = rgb.rows;
  image.data.resize(static_cast<size_t>(rgb.cols) * rgb.rows * 3);
  if (rgb.isContinuous()) {
    std::copy(rgb.data, rgb.data + image.data.size(), image.data.begin());
  } else {
    for (int y = 0; y < rgb.rows; ++y)
      std::copy(rgb.ptr(y), rgb.ptr(y) + static_cast<size_t>(rgb.cols) * 3,
                image.data.begin() + static_cast<size_t>(y) * rgb.cols * 3);
  }
  return image;
}

void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
}

}  // namespace

RgbImage load_rgb_png(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) raise(ErrorKind::Io, "cannot read image '", path, "'");
  return from_bgr_mat(bgr);
}

void save_rgb_png(const std::string& path, const RgbImage& image) {
  if (image.empty()) raise(ErrorKind::InvalidArgument, "refusing to save empty image");
  ensure_parent_dir(path);
  if (!cv::imwrite(path, to_bgr_mat(image)))
    raise(ErrorKind::Io, "cannot write image '", path, "'");
}

EnergyMap load_energy_png(const std::string& path, double energy_scale) {
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty()) raise(ErrorKind::Io, "cannot read energy map '", path, "'");
  if (raw.channels() != 1)
    raise(ErrorKind::Parse, "energy map '", path, "' has ", raw.channels(),
          " channels, expected 1");
  cv::Mat u16;
  if (raw.depth() == CV_16U) {
    u16 = raw;
  } else if (raw.depth() == CV_8U) {
    raw.convertTo(u16, CV_16U);
  } else {
    raise(ErrorKind::Parse, "energy map '", path, "' has unsupported depth");
  }
  EnergyMap map = EnergyMap::zeros(u16.cols, u16.rows, energy_scale);
  for (int y = 0; y < u16.rows; ++y) {
    const uint16_t* row = u16.ptr<uint16_t>(y);
    for (int x = 0; x < u16.cols; ++x) map.at(x, y) = static_cast<float>(row[x]);
  }
  return map;
}

void save_energy_png(const std::string& path, const EnergyMap& map) {
  if (map.empty()) raise(ErrorKind::InvalidArgument, "refusing to save empty energy map");
  cv::Mat u16(map.height, map.width, CV_16UC1);
  for (int y = 0; y < map.height; ++y) {
    uint16_t* row = u16.ptr<uint16_t>(y);
    for (int x = 0; x < map.width; ++x) {
      float v = map.at(x, y);
      if (!(v >= 0.0f) || v > 65535.0f)
        raise(ErrorKind::InvalidArgument, "energy map value ", v, " at (", x, ",", y,
              ") not storable as 16-bit");
      row[x] = static_cast<uint16_t>(std::lround(v));
    }
  }
  ensure_parent_dir(path);
  if (!cv::imwrite(path, u16)) raise(ErrorKind::Io, "cannot write energy map '", path, "'");
}

namespace {
int pick_interp(int in_w, int in_h, int out_w, int out_h) {
  return (out_w < in_w || out_h < in_h) ? cv::INTER_AREA : cv::INTER_LINEAR;
}
}  // namespace

RgbImage resize_rgb(const RgbImage& image, int out_width, int out_height) {
  if (image.empty()) raise(ErrorKind::InvalidArgument, "resize of empty image");
  if (out_width < 1 || out_height < 1)
    raise(ErrorKind::InvalidArgument, "resize target ", out_width, "x", out_height);
  if (out_width == image.width && out_height == image.height) return image;
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<uint8_t*>(image.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_width, out_height), 0, 0,
             pick_interp(image.width, image.height, out_width, out_height));
  RgbImage out;
  out.width = out_width;
  out.height = out_height;
  out.data.assign(dst.data, dst.data + static_cast<size_t>(out_width) * out_height * 3);
  return out;
}

EnergyMap resize_energy(const EnergyMap& map, int out_width, int out_height) {
  if (map.empty()) raise(ErrorKind::InvalidArgument, "resize of empty energy map");
  if (out_width < 1 || out_height < 1)
    raise(ErrorKind::InvalidArgument, "resize target ", out_width, "x", out_height);
  if (out_width == map.width && out_height == map.height) return map;
  cv::Mat src(map.height, map.width, CV_32FC1, const_cast<float*>(map.values.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_width, out_height), 0, 0,
             pick_interp(map.width, map.height, out_width, out_height));
  EnergyMap out = EnergyMap::zeros(out_width, out_height, map.energy_scale);
  for (int y = 0; y < out_height; ++y) {
    const float* row = dst.ptr<float>(y);
    for (int x = 0; x < out_width; ++x) out.at(x, y) = row[x];
  }
  return out;
}

void draw_rect(RgbImage& image, int x1, int y1, int x2, int y2, Color color, int thickness) {
  cv::Mat m(image.height, image.width, CV_8UC3, image.data.data());
  cv::rectangle(m, cv::Point(x1, y1), cv::Point(x2, y2),
                cv::Scalar(color.r, color.g, color.b), thickness);
}

void draw_text(RgbImage& image, const std::string& text, int x, int y, Color color,
               double scale) {
  cv::Mat m(image.height, image.width, CV_8UC3, image.data.data());
  cv::putText(m, text, cv::Point(x, y), cv::FONT_HERSHEY_SIMPLEX, scale,
              cv::Scalar(color.r, color.g, color.b), 1, cv::LINE_8);
}

void draw_line(RgbImage& image, int x1, int y1, int x2, int y2, Color color, int thickness) {
  cv::Mat m(image.height, image.width, CV_8UC3, image.data.data());
  cv::line(m, cv::Point(x1, y1), cv::Point(x2, y2), cv::Scalar(color.r, color.g, color.b),
           thickness);
}

void draw_filled_circle(RgbImage& image, int cx, int cy, int radius, Color color) {
  cv::Mat m(image.height, image.width, CV_8UC3, image.data.data());
  cv::circle(m, cv::Point(cx, cy), radius, cv::Scalar(color.r, color.g, color.b), -1);
}

}  // namespace foodpipe::io
