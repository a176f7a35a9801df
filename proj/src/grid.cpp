#include "etloc/grid.hpp"

namespace etloc {

BinaryMask rasterize_ellipse(const EllipseAnnotation& ellipse, int width, int height) {
  if (!(ellipse.rx > 0.0) || !(ellipse.ry > 0.0))
    throw NonPositiveRadius("ellipse radii must be positive");
  BinaryMask mask(height, width);
  for (int y = 0; y < height; ++y) {
    const double dy = (y - ellipse.cy) / ellipse.ry;
    for (int x = 0; x < width; ++x) {
      const double dx = (x - ellipse.cx) / ellipse.rx;
      mask(y, x) = dx * dx + dy * dy <= 1.0;
    }
  }
  if (!mask.any()) throw EmptyRaster("ellipse covers no pixel of the image");
  return mask;
}

BinaryMask label_mask(std::span<const EllipseAnnotation> ellipses, LabelId label, int width,
                      int height) {
  BinaryMask mask = BinaryMask::Constant(height, width, false);
  for (const auto& e : ellipses) {
    if (e.label == label) mask = mask || rasterize_ellipse(e, width, height);
  }
  return mask;
}

}  // namespace etloc
