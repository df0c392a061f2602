#include "sdnet/tiler.hpp"

#include <cmath>

namespace sdnet {

std::vector<int> axis_origins(int length, int tile, int stride) {
  if (tile <= 0 || stride <= 0) throw InvalidArgument("tile size and stride must be positive");
  if (length < tile) throw InvalidArgument("image is smaller than the tile");
  std::vector<int> out;
  for (int o = 0; o + tile < length; o += stride) out.push_back(o);
  out.push_back(length - tile);
  return out;
}

TileGrid plan_grid(int width, int height, int tile_size, double overlap) {
  if (tile_size <= 0) throw InvalidArgument("tile size must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgument("overlap must lie in [0,1)");
  if (width < tile_size || height < tile_size) throw InvalidArgument("image is smaller than the tile");
  TileGrid g;
  g.tile_size = tile_size;
  g.overlap = overlap;
  g.stride = std::max(1, int(std::lround(tile_size * (1.0 - overlap))));
  g.source_width = width;
  g.source_height = height;
  g.xs = axis_origins(width, tile_size, g.stride);
  g.ys = axis_origins(height, tile_size, g.stride);
  for (int y : g.ys)
    for (int x : g.xs) g.origins.push_back({x, y});
  return g;
}

}  // namespace sdnet
