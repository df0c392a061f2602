#pragma once

#include "sdnet/errors.hpp"
#include "sdnet/raster.hpp"

#include <vector>

namespace sdnet {

struct TileOrigin {
  int x = 0;
  int y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

/// Tile origins laid out at a fixed stride, with the last row and column
/// snapped inward so the final tile ends on the image edge.
struct TileGrid {
  int tile_size = 0;
  double overlap = 0.2;
  int stride = 0;
  int source_width = 0;
  int source_height = 0;
  std::vector<int> xs;  // column origins
  std::vector<int> ys;  // row origins
  std::vector<TileOrigin> origins;  // row-major over (ys, xs)
};

/// Origins along one axis of length `length` for tiles of `tile` at `stride`.
std::vector<int> axis_origins(int length, int tile, int stride);

/// stride = round(tile·(1 - overlap)), at least 1.
TileGrid plan_grid(int width, int height, int tile_size, double overlap = 0.2);

struct TissueFilter {
  double saturation_threshold = 0.05;  // HSV saturation in [0,1]
  double min_tissue_fraction = 0.1;
};

/// Fraction of pixels whose HSV saturation exceeds `saturation_threshold`.
template <typename Scalar>
double tissue_fraction(const Raster<Scalar>& tile, double saturation_threshold) {
  if (tile.channels() < 3) throw InvalidArgument("tissue detection needs an RGB image");
  const Eigen::ArrayXXd px = tile.pixels.template cast<double>().leftCols(3);
  const Eigen::ArrayXd mx = px.rowwise().maxCoeff(), mn = px.rowwise().minCoeff();
  const Eigen::ArrayXd sat = (mx > 0.0).select((mx - mn) / mx.cwiseMax(1e-300), 0.0);
  return double((sat > saturation_threshold).count()) / double(tile.size());
}

template <typename Scalar>
Raster<Scalar> crop(const Raster<Scalar>& img, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || x + width > img.width || y + height > img.height)
    throw InvalidArgument("crop exceeds image bounds");
  Raster<Scalar> out(height, width, img.channels());
  for (int r = 0; r < height; ++r)
    out.pixels.middleRows(Eigen::Index(r) * width, width) =
        img.pixels.middleRows(Eigen::Index(y + r) * img.width + x, width);
  return out;
}

struct TileRecord {
  TileOrigin origin;
  double tissue_fraction = 0.0;
  bool kept = false;
};

template <typename Scalar>
struct Tile {
  Raster<Scalar> image;
  TileOrigin origin;
  double tissue_fraction = 0.0;
};

/// Tissue statistics for every grid origin, kept or not.
template <typename Scalar>
std::vector<TileRecord> scan_tiles(const Raster<Scalar>& img, const TileGrid& grid, const TissueFilter& filter) {
  if (img.width != grid.source_width || img.height != grid.source_height)
    throw InvalidArgument("grid was planned for a different image size");
  std::vector<TileRecord> out;
  out.reserve(grid.origins.size());
  for (const auto& o : grid.origins) {
    TileRecord r;
    r.origin = o;
    r.tissue_fraction =
        tissue_fraction(crop(img, o.x, o.y, grid.tile_size, grid.tile_size), filter.saturation_threshold);
    r.kept = r.tissue_fraction >= filter.min_tissue_fraction;
    out.push_back(r);
  }
  return out;
}

/// Tiles whose tissue fraction reaches the filter threshold, in grid order.
template <typename Scalar>
std::vector<Tile<Scalar>> extract(const Raster<Scalar>& img, const TileGrid& grid, const TissueFilter& filter) {
  std::vector<Tile<Scalar>> out;
  for (const auto& r : scan_tiles(img, grid, filter))
    if (r.kept)
      out.push_back({crop(img, r.origin.x, r.origin.y, grid.tile_size, grid.tile_size), r.origin, r.tissue_fraction});
  return out;
}

}  // namespace sdnet
