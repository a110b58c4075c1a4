#include "hetnet/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

namespace hetnet {

Tensor load_image_rgb(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);  // BGR
  if (img.empty()) throw InputError("cannot read image '" + path + "'");
  Tensor out(1, 3, img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      out.at(0, 0, y, x) = row[x][2] / 255.0;
      out.at(0, 1, y, x) = row[x][1] / 255.0;
      out.at(0, 2, y, x) = row[x][0] / 255.0;
    }
  }
  return out;
}

MaskLoadResult load_mask(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw InputError("cannot read mask '" + path + "'");
  MaskLoadResult r;
  r.mask = Tensor(1, 1, img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const std::uint8_t* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) {
      if (row[x] != 0 && row[x] != 255) r.was_binary = false;
      r.mask.at(0, 0, y, x) = row[x] >= 128 ? 1.0 : 0.0;
    }
  }
  return r;
}

void save_gray_png(const std::string& path, const Tensor& map) {
  const Shape4 s = map.shape();
  if (s.b != 1 || s.c != 1) throw InputError("save_gray_png: expected a (1,1,H,W) tensor");
  cv::Mat img(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC1);
  for (int y = 0; y < img.rows; ++y) {
    std::uint8_t* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) {
      const double v = std::clamp(map.at(0, 0, y, x), 0.0, 1.0);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  if (!cv::imwrite(path, img)) throw InputError("cannot write '" + path + "'");
}

void save_rgb_png(const std::string& path, const Tensor& image) {
  const Shape4 s = image.shape();
  if (s.b != 1 || s.c != 3) throw InputError("save_rgb_png: expected a (1,3,H,W) tensor");
  cv::Mat img(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC3);
  for (int y = 0; y < img.rows; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path, img)) throw InputError("cannot write '" + path + "'");
}

}  // namespace hetnet
