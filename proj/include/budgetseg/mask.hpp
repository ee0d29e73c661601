#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace budgetseg {

/// Axis-aligned box in pixel coordinates, corners inclusive.
struct BBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  bool valid() const noexcept { return x1 <= x2 && y1 <= y2; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Exact pixel counts behind an IoU value.
struct IoUStats {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;

  IoUStats& operator+=(const IoUStats& o) noexcept {
    intersection += o.intersection;
    union_ += o.union_;
    return *this;
  }
  friend bool operator==(const IoUStats&, const IoUStats&) = default;
};

/// Binary occupancy grid stored row-major, one byte per pixel.
class Mask {
 public:
  Mask() = default;
  /// All-zero mask. Both dimensions must be positive.
  Mask(int width, int height);
  /// Takes ownership of row-major bits; any nonzero byte counts as set.
  Mask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int x, int y) const;
  void set(int x, int y, bool on = true);
  std::uint64_t count() const noexcept;
  bool same_shape(const Mask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  /// Parses `"<height> <width> <c0> <c1> ..."`: column-major run lengths that
  /// start with a run of zeros, as in COCO's uncompressed RLE.
  static Mask from_rle(std::string_view text);
  std::string to_rle() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using MaskPair = std::pair<Mask, Mask>;

struct IoUResult {
  double value = 0.0;
  IoUStats stats;
};

/// Throws ShapeError when the masks differ in size.
IoUStats iou_stats(const Mask& pred, const Mask& gt);

/// |pred ∧ gt| / |pred ∨ gt|; two empty masks score 1.
IoUResult iou(const Mask& pred, const Mask& gt);

/// IoU value from precomputed counts (1.0 when the union is empty).
double iou_from_stats(const IoUStats& stats) noexcept;

/// Mean per-sample IoU.
double giou(std::span<const MaskPair> pairs);
double giou(std::span<const IoUStats> stats);

/// Summed intersections over summed unions; 1.0 when every union is empty.
double ciou(std::span<const MaskPair> pairs);
double ciou(std::span<const IoUStats> stats);

/// Mean absolute coordinate difference over the four box coordinates.
double bbox_l1(const BBox& pred, const BBox& gt) noexcept;

/// Mean absolute coordinate difference over x and y.
double point_l1(const Point& pred, const Point& gt) noexcept;

}  // namespace budgetseg
