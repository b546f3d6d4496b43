#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace siamuap {

// Interleaved (H, W, C) image. Values are on the 0..255 intensity scale
// regardless of the element type.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : height_{height}, width_{width}, channels_{channels} {
    if (height < 0 || width < 0 || channels < 0) {
      throw std::invalid_argument("Image: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return height_ == other.height() && width_ == other.width() && channels_ == other.channels();
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Frame = Image<std::uint8_t>;

template <typename To, typename From>
Image<To> image_cast(const Image<From>& src) {
  Image<To> out(src.height(), src.width(), src.channels());
  std::transform(src.data().begin(), src.data().end(), out.data().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// Rounds and saturates to 8 bits.
template <typename T>
Frame to_frame(const Image<T>& src) {
  Frame out(src.height(), src.width(), src.channels());
  std::transform(src.data().begin(), src.data().end(), out.data().begin(), [](T v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 255.0);
    return static_cast<std::uint8_t>(c + 0.5);
  });
  return out;
}

template <typename T>
T clip_intensity(T v) {
  return std::clamp(v, T{0}, T{255});
}

}  // namespace siamuap
