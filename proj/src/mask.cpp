#include "budgetseg/mask.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "budgetseg/error.hpp"

namespace budgetseg {

namespace {

void require_positive(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw ValidationError("mask dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
}

void require_same_shape(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mask shape mismatch: " + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                     "x" + std::to_string(b.height()));
  }
}

}  // namespace

Mask::Mask(int width, int height) : width_(width), height_(height) {
  require_positive(width, height);
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

Mask::Mask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  require_positive(width, height);
  if (bits_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("mask bit buffer has " + std::to_string(bits_.size()) +
                     " entries, expected " + std::to_string(width * height));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

bool Mask::at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) {
    throw ValidationError("pixel (" + std::to_string(x) + "," + std::to_string(y) +
                          ") outside mask");
  }
  return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
}

void Mask::set(int x, int y, bool on) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) {
    throw ValidationError("pixel (" + std::to_string(x) + "," + std::to_string(y) +
                          ") outside mask");
  }
  bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
}

std::uint64_t Mask::count() const noexcept {
  std::uint64_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

Mask Mask::from_rle(std::string_view text) {
  std::istringstream in{std::string(text)};
  long long height = 0;
  long long width = 0;
  if (!(in >> height >> width)) {
    throw ParseError("RLE header must be '<height> <width>'", std::string(text));
  }
  if (height <= 0 || width <= 0 || height > (1 << 20) || width > (1 << 20)) {
    throw ParseError("RLE dimensions out of range", std::string(text));
  }
  Mask mask(static_cast<int>(width), static_cast<int>(height));
  const auto total = static_cast<unsigned long long>(width * height);

  unsigned long long pos = 0;
  bool value = false;
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const unsigned long long run = std::strtoull(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0' || token[0] == '-') {
      throw ParseError("RLE count '" + token + "' is not a non-negative integer",
                       std::string(text));
    }
    if (run > total - pos) {
      throw ParseError("RLE counts exceed height*width", std::string(text));
    }
    if (value) {
      for (unsigned long long k = pos; k < pos + run; ++k) {
        const auto x = static_cast<int>(k / static_cast<unsigned long long>(height));
        const auto y = static_cast<int>(k % static_cast<unsigned long long>(height));
        mask.set(x, y);
      }
    }
    pos += run;
    value = !value;
  }
  if (pos != total) {
    throw ParseError("RLE counts sum to " + std::to_string(pos) + ", expected " +
                         std::to_string(total),
                     std::string(text));
  }
  return mask;
}

std::string Mask::to_rle() const {
  std::string out = std::to_string(height_) + " " + std::to_string(width_);
  bool value = false;
  std::size_t run = 0;
  for (int x = 0; x < width_; ++x) {
    for (int y = 0; y < height_; ++y) {
      const bool bit = bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
      if (bit != value) {
        out += " " + std::to_string(run);
        run = 0;
        value = bit;
      }
      ++run;
    }
  }
  out += " " + std::to_string(run);
  return out;
}

IoUStats iou_stats(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt);
  IoUStats stats;
  const auto a = pred.bits();
  const auto b = gt.bits();
  for (std::size_t i = 0; i < a.size(); ++i) {
    stats.intersection += a[i] & b[i];
    stats.union_ += a[i] | b[i];
  }
  return stats;
}

double iou_from_stats(const IoUStats& stats) noexcept {
  if (stats.union_ == 0) return 1.0;
  return static_cast<double>(stats.intersection) / static_cast<double>(stats.union_);
}

IoUResult iou(const Mask& pred, const Mask& gt) {
  const auto stats = iou_stats(pred, gt);
  return {iou_from_stats(stats), stats};
}

double giou(std::span<const IoUStats> stats) {
  if (stats.empty()) throw ValidationError("giou needs at least one pair");
  double sum = 0.0;
  for (const auto& s : stats) sum += iou_from_stats(s);
  return sum / static_cast<double>(stats.size());
}

double ciou(std::span<const IoUStats> stats) {
  if (stats.empty()) throw ValidationError("ciou needs at least one pair");
  IoUStats total;
  for (const auto& s : stats) total += s;
  return iou_from_stats(total);
}

namespace {

std::vector<IoUStats> stats_of(std::span<const MaskPair> pairs) {
  std::vector<IoUStats> out;
  out.reserve(pairs.size());
  for (const auto& [pred, gt] : pairs) out.push_back(iou_stats(pred, gt));
  return out;
}

}  // namespace

double giou(std::span<const MaskPair> pairs) {
  const auto stats = stats_of(pairs);
  return giou(std::span<const IoUStats>(stats));
}

double ciou(std::span<const MaskPair> pairs) {
  const auto stats = stats_of(pairs);
  return ciou(std::span<const IoUStats>(stats));
}

double bbox_l1(const BBox& pred, const BBox& gt) noexcept {
  const double sum = std::abs(static_cast<double>(pred.x1) - gt.x1) +
                     std::abs(static_cast<double>(pred.y1) - gt.y1) +
                     std::abs(static_cast<double>(pred.x2) - gt.x2) +
                     std::abs(static_cast<double>(pred.y2) - gt.y2);
  return sum / 4.0;
}

double point_l1(const Point& pred, const Point& gt) noexcept {
  const double sum = std::abs(static_cast<double>(pred.x) - gt.x) +
                     std::abs(static_cast<double>(pred.y) - gt.y);
  return sum / 2.0;
}

}  // namespace budgetseg
